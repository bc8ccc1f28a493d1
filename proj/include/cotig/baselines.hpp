#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cotig/attribution.hpp"
#include "cotig/masking.hpp"
#include "cotig/oracle.hpp"
#include "cotig/scoring.hpp"
#include "cotig/selection.hpp"
#include "cotig/trace.hpp"

namespace cotig {

enum class BaselineMethod {
  first_correct,
  confidence_gain,
  ppl_removal,
  entropy,
  random_segments,
  top_abs_ig_tokens,
  top_signed_ig_tokens,
  high_strength_only,
};

BaselineMethod parse_baseline_method(std::string_view id);
std::string_view to_string(BaselineMethod method);

struct BaselinePolicy {
  BaselineMethod method = BaselineMethod::first_correct;
  /// Token share targeted by the ratio-matched measures and the token-level ablations.
  double token_ratio = 0.45;
  /// Share of segments drawn by the random-segments ablation.
  double random_fraction = 0.33;
  /// Samples per prefix when estimating answer confidence.
  std::size_t k_samples = 32;
  /// A segment counts as confidence-improving when its gain exceeds this.
  double epsilon_gain = 0.0;
  std::uint64_t seed = 0;
  /// Nucleus sampling for confidence estimation; max_new_tokens is overridden
  /// by the answer length.
  SamplingConfig sampling{0.6, 0.95, 16, 0, 1.0, false};
  PromptLayout prompt;
  /// Used by high-strength-only (beta is ignored there).
  double tau = 0.7;

  void validate() const;
};

/// ceil(fraction * n) clamped to [1, n], robust to representation error in `fraction`.
std::size_t ceil_share(double fraction, std::size_t n);

/// Segments 0..decision.
std::set<std::size_t> first_correct_select(const ReasoningTrace& trace);

struct ConfidenceGain {
  /// conf[m]: share of correct samples given the first m segments (m = 0..M).
  std::vector<double> confidence;
  /// delta[m] = conf[m + 1] - conf[m], the gain from revealing segment m.
  std::vector<double> delta;
  std::set<std::size_t> important;
};

/// Counting core: correct_counts[m] correct out of k for m = 0..M revealed segments.
ConfidenceGain confidence_gains(std::span<const std::size_t> correct_counts, std::size_t k, double epsilon_gain);

/// Samples k answers after each cot prefix S_1..S_m (answer forced through the
/// prompt frame). A sample is correct when its decoded text normalizes to the
/// normalized answer; generation is capped at the answer's token count.
ConfidenceGain confidence_gain_select(const GradOracle& oracle, const ReasoningTrace& trace,
                                      const BaselinePolicy& policy);

/// Segments in `order` are taken until their token count reaches
/// token_ratio * T (the smallest such prefix).
std::set<std::size_t> ratio_prefix(std::span<const std::size_t> order, std::span<const Segment> segments,
                                   double token_ratio);

/// Ranks segments by the increase in mean cot NLL when the segment is removed.
struct RemovalEffect {
  std::vector<double> delta_nll;
  std::set<std::size_t> important;
};
RemovalEffect ppl_removal_select(const GradOracle& oracle, const ReasoningTrace& trace, const BaselinePolicy& policy);

/// Ranks segments by mean next-token entropy.
std::set<std::size_t> entropy_select(const GradOracle& oracle, const ReasoningTrace& trace,
                                     const BaselinePolicy& policy);

/// Outcome of an ablation selector: a segment set, or a token mask for the
/// token-level variants.
struct AblationResult {
  std::set<std::size_t> important;
  std::optional<LossMask> token_mask;
};

/// random-segments, top-abs-ig-tokens, top-signed-ig-tokens or high-strength-only.
/// Token masks keep the answer region on and, with include_boundaries, the
/// boundary segments.
AblationResult ablation_select(const ReasoningTrace& trace, std::span<const SegmentScore> scores,
                               const TokenAttribution& igs, const BaselinePolicy& policy, bool include_boundaries);

/// The trace with the listed segments removed: cot bytes, tokens and segments
/// re-based onto the surviving text.
ReasoningTrace remove_segments(const ReasoningTrace& trace, const std::set<std::size_t>& drop);

struct PruneResult {
  ReasoningTrace trace;
  std::vector<std::size_t> dropped;
  double dropped_fraction = 0.0;
  bool shortfall = false;
};

/// Drops whole unimportant, non-boundary segments, lowest normalized strength
/// first, until the dropped token share reaches `target`.
PruneResult prune_trace(const ReasoningTrace& trace, const std::set<std::size_t>& important,
                        std::span<const SegmentScore> scores, double target = 0.30);

}  // namespace cotig
