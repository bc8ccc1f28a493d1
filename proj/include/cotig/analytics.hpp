#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cotig/oracle.hpp"
#include "cotig/selection.hpp"
#include "cotig/trace.hpp"

namespace cotig {

/// BLEU above this marks a segment as highly repetitive.
inline constexpr double kRepetitionBleu = 0.8;

struct SegmentStats {
  std::size_t seg_index = 0;
  double mean_nll = 0.0;      // nats / token
  double mean_entropy = 0.0;  // nats / token
  double bleu_vs_preceding = 0.0;
  std::optional<bool> is_truncated;
};

/// Per cot token: NLL of the token and entropy of the distribution it was drawn from.
struct TokenStats {
  std::vector<double> nll;
  std::vector<double> entropy;
};

TokenStats token_stats(const GradOracle& oracle, const ReasoningTrace& trace, const PromptLayout& prompt = {});

/// Mean token NLL and entropy per segment (bleu_vs_preceding filled as well).
std::vector<SegmentStats> segment_stats(const GradOracle& oracle, const ReasoningTrace& trace,
                                        const PromptLayout& prompt = {});

/// Whitespace-delimited words; the unit BLEU counts n-grams over.
std::vector<std::string> bleu_words(std::string_view text);

/// Sentence BLEU: uniform weights over n = 1..max_ngram, counts clipped by the
/// per-n-gram maximum over references, a zero match count smoothed to 1e-9,
/// orders the candidate is too short for skipped, and brevity penalty against
/// the closest reference length (shorter on ties).
double bleu(std::span<const std::string> candidate, std::span<const std::vector<std::string>> references,
            std::size_t max_ngram = 4);

/// BLEU of segment `seg_index` against every earlier segment of the trace; 0 for segment 0.
double bleu_vs_preceding(const ReasoningTrace& trace, std::size_t seg_index, std::size_t max_ngram = 4);

struct CdfTable {
  std::vector<double> percentile;  // bucket upper edges, (0, 1]
  std::vector<double> cumulative;  // mean cumulative normalized strength
  std::size_t traces = 0;
};

/// Segments of each trace ordered by descending normalized strength; the
/// cumulative curve is linearly interpolated at each bucket edge and averaged
/// over traces.
CdfTable strength_cdf(const std::vector<std::vector<double>>& normalized_strengths, std::size_t buckets);

/// Drops math wrappers (\boxed, \text, $, braces, \( \) \[ \]) and all
/// whitespace, then lower-cases ASCII.
std::string normalize_answer(std::string_view text);

/// First segment whose normalized text contains the normalized answer.
/// Throws Error(no_decision) when there is none.
std::size_t decision_segment(const ReasoningTrace& trace);

struct PositionalReport {
  std::size_t traces = 0;
  std::size_t excluded_traces = 0;
  std::size_t important = 0;
  std::size_t important_after = 0;
  std::size_t unimportant = 0;
  std::size_t unimportant_before = 0;
  /// Unimportant because they fall outside the top-k* prefix.
  std::size_t low_strength = 0;
  std::size_t low_strength_before = 0;
  /// Inside the top-k* prefix but filtered by the consistency threshold.
  std::size_t high_consistency = 0;
  std::size_t high_consistency_after = 0;

  [[nodiscard]] static double fraction(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  }
};

/// Positions of important / unimportant segments relative to each trace's
/// decision segment. Traces without one are excluded and counted.
PositionalReport positional_stats(std::span<const ReasoningTrace> traces, std::span<const SelectionResult> selections);

void write_positional_csv(std::ostream& out, const PositionalReport& report);

}  // namespace cotig
