#include "cotig/trace.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_set>

#include <fmt/format.h>

#include "cotig/error.hpp"

namespace cotig {

using nlohmann::json;

std::string_view ReasoningTrace::segment_text(std::size_t m) const {
  const auto& s = segments.at(m);
  return std::string_view(cot).substr(s.chars.begin, s.chars.size());
}

namespace {

void check_tokens(const std::vector<Token>& tokens, std::size_t text_size, std::string_view what,
                  std::string_view trace_id) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t.index != i) {
      throw Error(ErrorKind::schema, fmt::format("trace '{}': {} token {} has index {}", trace_id, what, i, t.index));
    }
    if (t.span.end <= t.span.begin || t.span.end > text_size) {
      throw Error(ErrorKind::schema,
                  fmt::format("trace '{}': {} token {} span [{}, {}) outside text of {} bytes", trace_id, what, i,
                              t.span.begin, t.span.end, text_size));
    }
    if (i > 0 && t.span.begin < tokens[i - 1].span.end) {
      throw Error(ErrorKind::schema,
                  fmt::format("trace '{}': {} token {} overlaps its predecessor", trace_id, what, i));
    }
  }
}

// `text` may be omitted when it equals the source bytes under the span; byte-level
// tokens of multi-byte characters are not valid UTF-8 on their own.
std::vector<Token> tokens_from_json(const json& arr, std::string_view source, std::size_t line_no,
                                    std::string_view key) {
  if (!arr.is_array()) {
    throw Error(ErrorKind::schema, fmt::format("line {}: '{}' must be an array", line_no, key));
  }
  std::vector<Token> out;
  out.reserve(arr.size());
  for (const auto& t : arr) {
    if (!t.is_object() || !t.contains("start") || !t.contains("end") || !t["start"].is_number_unsigned() ||
        !t["end"].is_number_unsigned() || (t.contains("text") && !t["text"].is_string())) {
      throw Error(ErrorKind::schema,
                  fmt::format("line {}: '{}' entries need unsigned start/end and optional string text", line_no, key));
    }
    CharSpan span{t["start"].get<std::size_t>(), t["end"].get<std::size_t>()};
    std::string text;
    if (t.contains("text")) {
      text = t["text"].get<std::string>();
    } else if (span.begin < span.end && span.end <= source.size()) {
      text = std::string(source.substr(span.begin, span.size()));
    }
    out.push_back(Token{out.size(), std::move(text), span});
  }
  return out;
}

json tokens_to_json(const std::vector<Token>& tokens, std::string_view source) {
  json arr = json::array();
  for (const auto& t : tokens) {
    json j = {{"start", t.span.begin}, {"end", t.span.end}};
    if (t.span.end > source.size() || source.substr(t.span.begin, t.span.size()) != t.text) j["text"] = t.text;
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace

void validate(const ReasoningTrace& trace) {
  if (trace.trace_id.empty()) throw Error(ErrorKind::schema, "trace_id must be non-empty");
  if (trace.cot.empty() || trace.tokens.empty()) {
    throw Error(ErrorKind::schema, fmt::format("trace '{}': cot must contain at least one token", trace.trace_id));
  }
  check_tokens(trace.tokens, trace.cot.size(), "cot", trace.trace_id);
  check_tokens(trace.answer_tokens, trace.answer.size(), "answer", trace.trace_id);
  if (trace.segments.empty()) return;

  std::size_t next = 0;
  std::size_t firsts = 0;
  std::size_t lasts = 0;
  std::size_t byte = 0;
  for (std::size_t m = 0; m < trace.segments.size(); ++m) {
    const auto& s = trace.segments[m];
    if (s.seg_index != m || s.first != next || s.last < s.first || s.last >= trace.tokens.size()) {
      throw Error(ErrorKind::schema, fmt::format("trace '{}': segment {} breaks the token partition",
                                                 trace.trace_id, m));
    }
    if (s.chars.begin != byte || s.chars.end < s.chars.begin) {
      throw Error(ErrorKind::schema, fmt::format("trace '{}': segment {} byte span is not contiguous",
                                                 trace.trace_id, m));
    }
    byte = s.chars.end;
    next = s.last + 1;
    firsts += s.is_first ? 1 : 0;
    lasts += s.is_last ? 1 : 0;
  }
  if (next != trace.tokens.size() || byte != trace.cot.size()) {
    throw Error(ErrorKind::schema, fmt::format("trace '{}': segments do not cover the cot", trace.trace_id));
  }
  if (firsts != 1 || lasts != 1 || !trace.segments.front().is_first || !trace.segments.back().is_last) {
    throw Error(ErrorKind::schema, fmt::format("trace '{}': boundary flags are inconsistent", trace.trace_id));
  }
}

std::vector<Segment> segments_from_ranges(const std::vector<Token>& tokens, std::size_t text_size,
                                          const std::vector<std::pair<std::size_t, std::size_t>>& ranges) {
  std::vector<Segment> out;
  out.reserve(ranges.size());
  std::size_t next = 0;
  for (const auto& [first, last] : ranges) {
    if (first != next || last < first || last >= tokens.size()) {
      throw Error(ErrorKind::alignment,
                  fmt::format("token range [{}, {}] does not continue the partition at {}", first, last, next));
    }
    Segment s;
    s.seg_index = out.size();
    s.first = first;
    s.last = last;
    s.chars.begin = out.empty() ? 0 : tokens[first].span.begin;
    if (!out.empty()) out.back().chars.end = s.chars.begin;
    out.push_back(s);
    next = last + 1;
  }
  if (next != tokens.size()) {
    throw Error(ErrorKind::alignment, fmt::format("ranges cover {} of {} tokens", next, tokens.size()));
  }
  if (!out.empty()) {
    out.back().chars.end = text_size;
    out.front().is_first = true;
    out.back().is_last = true;
  }
  return out;
}

std::vector<ReasoningTrace> parse_traces(std::istream& in, const ByteTokenizer& tokenizer) {
  std::vector<ReasoningTrace> traces;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::parse, fmt::format("line {}: {}", line_no, e.what()));
    }
    if (!rec.is_object()) throw Error(ErrorKind::parse, fmt::format("line {}: record is not an object", line_no));
    for (const char* key : {"trace_id", "query", "answer", "cot"}) {
      if (!rec.contains(key) || !rec[key].is_string()) {
        throw Error(ErrorKind::schema, fmt::format("line {}: missing required string field '{}'", line_no, key));
      }
    }
    ReasoningTrace t;
    t.trace_id = rec["trace_id"].get<std::string>();
    t.query = rec["query"].get<std::string>();
    t.answer = rec["answer"].get<std::string>();
    t.cot = rec["cot"].get<std::string>();
    if (!seen.insert(t.trace_id).second) {
      throw Error(ErrorKind::conflict, fmt::format("line {}: duplicate trace_id '{}'", line_no, t.trace_id));
    }
    t.tokens = rec.contains("tokens") ? tokens_from_json(rec["tokens"], t.cot, line_no, "tokens") : tokenizer.tokenize(t.cot);
    t.answer_tokens = rec.contains("answer_tokens") ? tokens_from_json(rec["answer_tokens"], t.answer, line_no, "answer_tokens")
                                                    : tokenizer.tokenize(t.answer);
    try {
      if (rec.contains("segments")) {
        std::vector<std::pair<std::size_t, std::size_t>> ranges;
        for (const auto& r : rec["segments"]) {
          if (!r.is_array() || r.size() != 2) {
            throw Error(ErrorKind::schema, "segments entries must be [first, last] pairs");
          }
          ranges.emplace_back(r[0].get<std::size_t>(), r[1].get<std::size_t>());
        }
        t.segments = segments_from_ranges(t.tokens, t.cot.size(), ranges);
      }
      validate(t);
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("line {}: {}", line_no, e.detail()));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::schema, fmt::format("line {}: {}", line_no, e.what()));
    }
    traces.push_back(std::move(t));
  }
  return traces;
}

std::vector<ReasoningTrace> load_traces(const std::filesystem::path& path, const ByteTokenizer& tokenizer) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot open corpus '{}'", path.string()));
  return parse_traces(in, tokenizer);
}

json to_json(const ReasoningTrace& trace) {
  json rec = {{"trace_id", trace.trace_id},
              {"query", trace.query},
              {"answer", trace.answer},
              {"cot", trace.cot}};
  // Absent token lists are re-derived with the byte tokenizer on read.
  if (!trace.tokens.empty()) rec["tokens"] = tokens_to_json(trace.tokens, trace.cot);
  if (!trace.answer_tokens.empty()) rec["answer_tokens"] = tokens_to_json(trace.answer_tokens, trace.answer);
  if (!trace.segments.empty()) {
    json segs = json::array();
    for (const auto& s : trace.segments) segs.push_back({s.first, s.last});
    rec["segments"] = std::move(segs);
  }
  return rec;
}

void write_traces(std::ostream& out, const std::vector<ReasoningTrace>& traces) {
  for (const auto& t : traces) out << to_json(t).dump() << '\n';
}

void save_traces(const std::filesystem::path& path, const std::vector<ReasoningTrace>& traces) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, fmt::format("cannot write '{}'", path.string()));
  write_traces(out, traces);
}

}  // namespace cotig
