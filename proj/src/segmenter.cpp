#include "cotig/segmenter.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "cotig/error.hpp"

namespace cotig {

namespace {

void order_longest_first(std::vector<std::string>& keywords) {
  std::stable_sort(keywords.begin(), keywords.end(),
                   [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
}

std::string unescape(std::string_view line) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && i + 1 < line.size()) {
      const char c = line[++i];
      switch (c) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '\\': out.push_back('\\'); break;
        default:
          out.push_back('\\');
          out.push_back(c);
      }
    } else {
      out.push_back(line[i]);
    }
  }
  return out;
}

}  // namespace

KeywordSet default_keywords(std::string_view profile) {
  KeywordSet ks;
  ks.profile = std::string(profile);
  if (profile == "paper-main") {
    ks.keywords = {"\n\nWait",        "\n\nAlternatively", "\n\nHowever",   "\n\nNot sure",
                   "\n\nGoing back",  "\n\nBacktrack",     "\n\nTrace back", "\n\nAnother",
                   "\n\nBut wait",    "\n\nBut alternatively", "\n\nBut just to"};
  } else if (profile == "retro-style") {
    ks.keywords = {"\n\nBut",        "\n\nWait",      "\n\nAlternatively", "\n\nHowever",
                   "\n\nHmm",        "\n\nHmmm",      "\n\nNot sure",      "\n\nGoing back",
                   "\n\nBacktrack",  "\n\nTrace back", "\n\nAnother"};
  } else {
    throw Error(ErrorKind::config, fmt::format("unknown keyword profile '{}'", profile));
  }
  order_longest_first(ks.keywords);
  return ks;
}

KeywordSet load_keywords(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot open keyword file '{}'", path.string()));
  KeywordSet ks;
  ks.profile = path.filename().string();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ks.keywords.push_back(unescape(line));
  }
  if (ks.keywords.empty()) throw Error(ErrorKind::config, fmt::format("keyword file '{}' is empty", path.string()));
  order_longest_first(ks.keywords);
  return ks;
}

std::vector<CharSpan> segment_text(std::string_view cot, const KeywordSet& keywords) {
  std::vector<CharSpan> spans;
  if (cot.empty()) return spans;
  std::size_t open = 0;
  for (std::size_t pos = 1; pos < cot.size(); ++pos) {
    const auto rest = cot.substr(pos);
    const bool hit = std::any_of(keywords.keywords.begin(), keywords.keywords.end(),
                                 [&](const std::string& k) { return !k.empty() && rest.starts_with(k); });
    if (hit) {
      spans.push_back({open, pos});
      open = pos;
    }
  }
  spans.push_back({open, cot.size()});
  return spans;
}

std::vector<Segment> align_to_tokens(const std::vector<CharSpan>& spans, const std::vector<Token>& tokens) {
  if (spans.empty()) throw Error(ErrorKind::alignment, "no spans to align");
  const std::size_t text_end = spans.back().end;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::size_t span_idx = 0;
  std::size_t owner = static_cast<std::size_t>(-1);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::size_t start = tokens[i].span.begin;
    if (start >= text_end) {
      throw Error(ErrorKind::alignment,
                  fmt::format("token {} starts at byte {} beyond text end {}", i, start, text_end));
    }
    while (spans[span_idx].end <= start) ++span_idx;
    if (ranges.empty() || span_idx != owner) {
      ranges.emplace_back(i, i);
      owner = span_idx;
    } else {
      ranges.back().second = i;
    }
  }
  return segments_from_ranges(tokens, text_end, ranges);
}

void segment_trace(ReasoningTrace& trace, const KeywordSet& keywords) {
  trace.segments = align_to_tokens(segment_text(trace.cot, keywords), trace.tokens);
}

}  // namespace cotig
