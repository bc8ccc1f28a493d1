#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cotig/trace.hpp"

namespace cotig {

/// Literal transition keywords, ordered longest first.
struct KeywordSet {
  std::string profile;
  std::vector<std::string> keywords;
};

/// "paper-main" (curated "\n\n"-prefixed list without bare "But"/"Hmm") or
/// "retro-style" (the broader list). Throws Error(config) on unknown ids.
KeywordSet default_keywords(std::string_view profile);

/// One keyword per line; "\n", "\t" and "\\" escapes are expanded. Blank lines are skipped.
KeywordSet load_keywords(const std::filesystem::path& path);

/// Splits `cot` into spans that tile it exactly. A span opens at every keyword
/// occurrence past position 0; matching is literal and case-sensitive.
std::vector<CharSpan> segment_text(std::string_view cot, const KeywordSet& keywords);

/// Assigns each token to the span holding its first byte. Spans that receive no
/// token start fold into the preceding segment. Throws Error(alignment) when a
/// token starts past the end of the text.
std::vector<Segment> align_to_tokens(const std::vector<CharSpan>& spans, const std::vector<Token>& tokens);

/// segment_text + align_to_tokens, writing the result into trace.segments.
void segment_trace(ReasoningTrace& trace, const KeywordSet& keywords);

}  // namespace cotig
