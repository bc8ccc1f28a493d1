#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cotig/segmenter.hpp"
#include "cotig/trace.hpp"

namespace cotig {

/// What a segment of a generated trace is, recorded when it is generated.
enum class SegmentKind { step, repeat, truncation, filler };

std::string_view to_string(SegmentKind kind);

struct SyntheticConfig {
  std::size_t traces = 200;
  std::uint64_t seed = 0;
  std::size_t min_ops = 3;
  std::size_t max_ops = 5;
  /// Per-trace injection probabilities.
  double repeat_rate = 0.9;
  double truncation_rate = 0.5;
  double filler_rate = 0.5;
  /// Longest training sequence (with prompt frame and eos) a trace may need.
  std::size_t max_sequence = 512;
};

struct SyntheticTrace {
  /// Trace with injections, tokenized and segmented under "paper-main".
  ReasoningTrace trace;
  /// Same query and answer with only the genuine steps.
  ReasoningTrace clean;
  /// One label per segment of `trace`.
  std::vector<SegmentKind> kinds;
  /// For repeats, the index of the segment copied; otherwise the segment itself.
  std::vector<std::size_t> source;
};

/// Toy arithmetic chains ("Start with 17. Add 5, then multiply by 3...") whose
/// cot walks through one operation per segment. Injected segments are verbatim
/// repeats of an earlier non-first step, mid-thought truncations and filler
/// clarifications; none is ever the first or last segment.
std::vector<SyntheticTrace> generate_synthetic(const SyntheticConfig& cfg, const ByteTokenizer& tokenizer);

}  // namespace cotig
