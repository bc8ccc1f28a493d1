#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cotig/tokenizer.hpp"

namespace cotig {

/// Half-open byte range [begin, end).
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  [[nodiscard]] std::size_t size() const noexcept { return end - begin; }
  friend auto operator<=>(const CharSpan&, const CharSpan&) = default;
};

struct Token {
  std::size_t index = 0;
  std::string text;
  CharSpan span;

  friend bool operator==(const Token&, const Token&) = default;
};

/// Contiguous run of tokens [first, last] opened by a transition keyword.
struct Segment {
  std::size_t seg_index = 0;
  std::size_t first = 0;
  std::size_t last = 0;
  /// Bytes of the cot owned by this segment; the spans of a trace tile the cot.
  CharSpan chars;
  bool is_first = false;
  bool is_last = false;

  [[nodiscard]] std::size_t n_tokens() const noexcept { return last - first + 1; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct ReasoningTrace {
  std::string trace_id;
  std::string query;
  std::string answer;
  std::string cot;
  std::vector<Token> tokens;
  /// Tokens of the final answer; spans are relative to `answer`.
  std::vector<Token> answer_tokens;
  /// Empty until the segmenter has run.
  std::vector<Segment> segments;

  [[nodiscard]] std::size_t token_count() const noexcept { return tokens.size(); }
  [[nodiscard]] std::size_t segment_count() const noexcept { return segments.size(); }
  [[nodiscard]] std::string_view segment_text(std::size_t m) const;

  friend bool operator==(const ReasoningTrace&, const ReasoningTrace&) = default;
};

/// Checks every structural invariant; the segment partition is checked only
/// once segments exist. Throws Error(schema).
void validate(const ReasoningTrace& trace);

/// Builds segments from inclusive token ranges, assigning byte ownership so the
/// segments tile the cot. Throws Error(alignment) if the ranges do not
/// partition the token indices in order.
std::vector<Segment> segments_from_ranges(const std::vector<Token>& tokens, std::size_t text_size,
                                          const std::vector<std::pair<std::size_t, std::size_t>>& ranges);

/// Parses one NDJSON corpus stream. Records lacking `tokens` / `answer_tokens`
/// are tokenized with `tokenizer`.
std::vector<ReasoningTrace> parse_traces(std::istream& in, const ByteTokenizer& tokenizer);
std::vector<ReasoningTrace> load_traces(const std::filesystem::path& path, const ByteTokenizer& tokenizer);

nlohmann::json to_json(const ReasoningTrace& trace);
void write_traces(std::ostream& out, const std::vector<ReasoningTrace>& traces);
void save_traces(const std::filesystem::path& path, const std::vector<ReasoningTrace>& traces);

}  // namespace cotig
