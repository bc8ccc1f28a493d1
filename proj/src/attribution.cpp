#include "cotig/attribution.hpp"

#include <cmath>
#include <string>

#include <fmt/format.h>

#include "cotig/error.hpp"

namespace cotig {

void AttributionConfig::validate() const {
  if (steps < 1) throw Error(ErrorKind::config, "attribution needs at least one interpolation step");
  if (baseline == BaselineKind::token && baseline_token < 0) {
    throw Error(ErrorKind::config, "baseline token id must be non-negative");
  }
}

std::string AttributionConfig::baseline_id() const {
  switch (baseline) {
    case BaselineKind::pad: return "pad";
    case BaselineKind::zero: return "zero";
    case BaselineKind::token: return fmt::format("token:{}", baseline_token);
  }
  return "pad";
}

BaselineKind parse_baseline(std::string_view id, TokenId& token_out) {
  if (id == "pad") return BaselineKind::pad;
  if (id == "zero") return BaselineKind::zero;
  if (id.starts_with("token:")) {
    try {
      token_out = static_cast<TokenId>(std::stol(std::string(id.substr(6))));
      return BaselineKind::token;
    } catch (const std::exception&) {
    }
  }
  throw Error(ErrorKind::config, fmt::format("unknown baseline '{}'", id));
}

std::string_view to_string(AttributedRegion region) {
  return region == AttributedRegion::cot_only ? "cot-only" : "query-and-cot";
}

AttributedRegion parse_region(std::string_view id) {
  if (id == "cot-only") return AttributedRegion::cot_only;
  if (id == "query-and-cot") return AttributedRegion::query_and_cot;
  throw Error(ErrorKind::config, fmt::format("unknown attributed region '{}'", id));
}

double TokenAttribution::relative_gap() const {
  const double delta = std::abs(score_input - score_baseline);
  if (delta == 0.0) return completeness_gap == 0.0 ? 0.0 : INFINITY;
  return completeness_gap / delta;
}

TokenAttribution integrated_gradients(const GradOracle& oracle, const ReasoningTrace& trace,
                                      const AttributionConfig& cfg) {
  cfg.validate();
  const SequenceLayout layout = layout_trace(oracle, trace, cfg.prompt);
  const auto context = layout.context();
  const auto target = layout.target();
  const Eigen::Index first =
      static_cast<Eigen::Index>(cfg.region == AttributedRegion::cot_only ? layout.cot_begin : layout.query_begin);
  const Eigen::Index count = static_cast<Eigen::Index>(layout.cot_end) - first;

  const Matrix x = oracle.embed_sequence(context);
  Vector base;
  switch (cfg.baseline) {
    case BaselineKind::pad: base = oracle.pad_embedding(); break;
    case BaselineKind::zero: base = Vector::Zero(static_cast<Eigen::Index>(oracle.embed_dim())); break;
    case BaselineKind::token: base = oracle.embed(cfg.baseline_token); break;
  }
  Matrix x_base = x;
  for (Eigen::Index r = first; r < first + count; ++r) x_base.row(r) = base.transpose();
  const Matrix delta = x - x_base;

  Matrix grad_sum = Matrix::Zero(count, x.cols());
  const double J = static_cast<double>(cfg.steps);
  for (std::size_t j = 1; j <= cfg.steps; ++j) {
    const double alpha = static_cast<double>(j) / J;
    const Matrix z = x_base + alpha * delta;
    grad_sum += oracle.grad_wrt_embeddings(context, target, z).middleRows(first, count);
  }

  TokenAttribution out;
  out.trace_id = trace.trace_id;
  out.config = cfg;
  out.query_tokens = static_cast<std::size_t>(static_cast<Eigen::Index>(layout.cot_begin) - first);
  out.igs.resize(static_cast<std::size_t>(count));
  double total = 0.0;
  for (Eigen::Index r = 0; r < count; ++r) {
    double ig = 0.0;
    for (Eigen::Index i = 0; i < x.cols(); ++i) ig += delta(first + r, i) * (grad_sum(r, i) / J);
    out.igs[static_cast<std::size_t>(r)] = ig;
    total += ig;
  }
  out.score_input = oracle.score_target(context, target, &x);
  out.score_baseline = oracle.score_target(context, target, &x_base);
  out.completeness_gap = std::abs(total - (out.score_input - out.score_baseline));
  return out;
}

std::vector<ConvergencePoint> convergence_probe(const GradOracle& oracle, const ReasoningTrace& trace,
                                                std::span<const std::size_t> steps, AttributionConfig cfg) {
  for (std::size_t i = 1; i < steps.size(); ++i) {
    if (steps[i] < steps[i - 1]) throw Error(ErrorKind::config, "convergence probe steps must be ascending");
  }
  std::vector<ConvergencePoint> out;
  for (std::size_t J : steps) {
    cfg.steps = J;
    const auto a = integrated_gradients(oracle, trace, cfg);
    out.push_back({J, a.completeness_gap, a.relative_gap()});
  }
  return out;
}

}  // namespace cotig
