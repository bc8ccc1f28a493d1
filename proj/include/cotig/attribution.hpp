#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cotig/oracle.hpp"
#include "cotig/trace.hpp"

namespace cotig {

enum class BaselineKind { pad, zero, token };
enum class AttributedRegion { cot_only, query_and_cot };

struct AttributionConfig {
  std::size_t steps = 50;
  BaselineKind baseline = BaselineKind::pad;
  /// Used when baseline == token: the baseline is this token's embedding.
  TokenId baseline_token = special::pad;
  AttributedRegion region = AttributedRegion::cot_only;
  PromptLayout prompt;

  void validate() const;
  /// "pad", "zero" or "token:<id>".
  [[nodiscard]] std::string baseline_id() const;
};

BaselineKind parse_baseline(std::string_view id, TokenId& token_out);
std::string_view to_string(AttributedRegion region);
AttributedRegion parse_region(std::string_view id);

struct TokenAttribution {
  std::string trace_id;
  /// One value per attributed token: query tokens first (query_and_cot only), then cot tokens.
  std::vector<double> igs;
  std::size_t query_tokens = 0;
  /// |sum(igs) - (F(x) - F(x'))|
  double completeness_gap = 0.0;
  double score_input = 0.0;
  double score_baseline = 0.0;
  AttributionConfig config;

  [[nodiscard]] std::span<const double> cot_igs() const {
    return std::span<const double>(igs).subspan(query_tokens);
  }
  /// completeness_gap / |F(x) - F(x')|, 0 when both vanish.
  [[nodiscard]] double relative_gap() const;
};

/// Integrated gradients along the straight path from the baseline to the
/// actual embeddings of the attributed tokens, estimated with the right-endpoint
/// Riemann sum over alpha = j/J, j = 1..J. Tokens outside the attributed region
/// keep their true embeddings at every step. Per-token IG is the plain sum
/// over embedding dimensions.
TokenAttribution integrated_gradients(const GradOracle& oracle, const ReasoningTrace& trace,
                                      const AttributionConfig& cfg = {});

struct ConvergencePoint {
  std::size_t steps = 0;
  double completeness_gap = 0.0;
  double relative_gap = 0.0;
};

/// Completeness gap for each J in `steps` (ascending).
std::vector<ConvergencePoint> convergence_probe(const GradOracle& oracle, const ReasoningTrace& trace,
                                                std::span<const std::size_t> steps, AttributionConfig cfg = {});

}  // namespace cotig
