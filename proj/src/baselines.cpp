#include "cotig/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "cotig/analytics.hpp"
#include "cotig/error.hpp"
#include "cotig/random.hpp"

namespace cotig {

namespace {

struct MethodName {
  BaselineMethod method;
  std::string_view name;
};

constexpr MethodName kMethods[] = {
    {BaselineMethod::first_correct, "first-correct"},
    {BaselineMethod::confidence_gain, "confidence-gain"},
    {BaselineMethod::ppl_removal, "ppl-removal"},
    {BaselineMethod::entropy, "entropy"},
    {BaselineMethod::random_segments, "random-segments"},
    {BaselineMethod::top_abs_ig_tokens, "top-abs-ig-tokens"},
    {BaselineMethod::top_signed_ig_tokens, "top-signed-ig-tokens"},
    {BaselineMethod::high_strength_only, "high-strength-only"},
};

// Stable descending order of `values`, earlier index first on ties.
std::vector<std::size_t> rank_descending(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return order;
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

BaselineMethod parse_baseline_method(std::string_view id) {
  for (const auto& m : kMethods) {
    if (m.name == id) return m.method;
  }
  throw Error(ErrorKind::config, fmt::format("unknown baseline method '{}'", id));
}

std::string_view to_string(BaselineMethod method) {
  for (const auto& m : kMethods) {
    if (m.method == method) return m.name;
  }
  return "unknown";
}

void BaselinePolicy::validate() const {
  if (!(token_ratio > 0.0 && token_ratio <= 1.0)) throw Error(ErrorKind::config, "token ratio must lie in (0, 1]");
  if (!(random_fraction > 0.0 && random_fraction <= 1.0)) {
    throw Error(ErrorKind::config, "random segment fraction must lie in (0, 1]");
  }
  if (k_samples < 1) throw Error(ErrorKind::config, "k_samples must be at least 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorKind::config, "tau must lie in (0, 1]");
  sampling.validate();
}

std::size_t ceil_share(double fraction, std::size_t n) {
  if (n == 0) return 0;
  const double raw = std::ceil(fraction * static_cast<double>(n) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, n);
}

std::set<std::size_t> first_correct_select(const ReasoningTrace& trace) {
  const std::size_t decision = decision_segment(trace);
  std::set<std::size_t> out;
  for (std::size_t m = 0; m <= decision; ++m) out.insert(m);
  return out;
}

ConfidenceGain confidence_gains(std::span<const std::size_t> correct_counts, std::size_t k, double epsilon_gain) {
  if (k == 0) throw Error(ErrorKind::config, "k must be at least 1");
  ConfidenceGain g;
  for (std::size_t c : correct_counts) g.confidence.push_back(static_cast<double>(c) / static_cast<double>(k));
  for (std::size_t m = 1; m < g.confidence.size(); ++m) {
    g.delta.push_back(g.confidence[m] - g.confidence[m - 1]);
    if (g.delta.back() > epsilon_gain) g.important.insert(m - 1);
  }
  return g;
}

ConfidenceGain confidence_gain_select(const GradOracle& oracle, const ReasoningTrace& trace,
                                      const BaselinePolicy& policy) {
  policy.validate();
  const std::string expected = normalize_answer(trace.answer);
  SamplingConfig cfg = policy.sampling;
  cfg.max_new_tokens = std::max<std::size_t>(1, trace.answer_tokens.size());
  std::vector<std::size_t> counts;
  for (std::size_t m = 0; m <= trace.segment_count(); ++m) {
    const std::size_t cot_tokens = m == 0 ? 0 : trace.segments[m - 1].last + 1;
    const auto context = forcing_context(oracle, trace, cot_tokens, policy.prompt);
    cfg.seed = derive_seed(policy.seed, fnv1a64(trace.trace_id), m);
    std::size_t correct = 0;
    for (const auto& sample : sample_answers(oracle, context, cfg, policy.k_samples)) {
      if (normalize_answer(oracle.tokenizer().decode(sample)) == expected) ++correct;
    }
    counts.push_back(correct);
  }
  return confidence_gains(counts, policy.k_samples, policy.epsilon_gain);
}

std::set<std::size_t> ratio_prefix(std::span<const std::size_t> order, std::span<const Segment> segments,
                                   double token_ratio) {
  std::size_t total = 0;
  for (const auto& s : segments) total += s.n_tokens();
  const double goal = token_ratio * static_cast<double>(total);
  std::set<std::size_t> out;
  std::size_t taken = 0;
  for (std::size_t m : order) {
    if (!out.empty() && static_cast<double>(taken) >= goal) break;
    out.insert(m);
    taken += segments[m].n_tokens();
  }
  return out;
}

RemovalEffect ppl_removal_select(const GradOracle& oracle, const ReasoningTrace& trace, const BaselinePolicy& policy) {
  policy.validate();
  RemovalEffect r;
  if (trace.segment_count() <= 1) {
    r.delta_nll.assign(trace.segment_count(), 0.0);
    r.important = {0};
    return r;
  }
  const double full = mean(token_stats(oracle, trace, policy.prompt).nll);
  for (std::size_t m = 0; m < trace.segment_count(); ++m) {
    const ReasoningTrace reduced = remove_segments(trace, {m});
    r.delta_nll.push_back(mean(token_stats(oracle, reduced, policy.prompt).nll) - full);
  }
  const auto order = rank_descending(r.delta_nll);
  r.important = ratio_prefix(order, trace.segments, policy.token_ratio);
  return r;
}

std::set<std::size_t> entropy_select(const GradOracle& oracle, const ReasoningTrace& trace,
                                     const BaselinePolicy& policy) {
  policy.validate();
  std::vector<double> seg_entropy;
  for (const auto& s : segment_stats(oracle, trace, policy.prompt)) seg_entropy.push_back(s.mean_entropy);
  const auto order = rank_descending(seg_entropy);
  return ratio_prefix(order, trace.segments, policy.token_ratio);
}

AblationResult ablation_select(const ReasoningTrace& trace, std::span<const SegmentScore> scores,
                               const TokenAttribution& igs, const BaselinePolicy& policy, bool include_boundaries) {
  policy.validate();
  AblationResult out;
  const std::size_t M = trace.segment_count();
  switch (policy.method) {
    case BaselineMethod::random_segments: {
      std::vector<std::size_t> pool(M);
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      Rng rng(derive_seed(policy.seed, fnv1a64(trace.trace_id)));
      const std::size_t n = ceil_share(policy.random_fraction, M);
      for (std::size_t i = 0; i < n; ++i) {
        std::swap(pool[i], pool[i + rng.below(M - i)]);
        out.important.insert(pool[i]);
      }
      if (include_boundaries) add_boundaries(out.important, trace.segments);
      return out;
    }
    case BaselineMethod::high_strength_only: {
      SelectionPolicy sp{policy.tau, 1.0, include_boundaries};
      out.important = select_important(scores, trace.segments, sp).important;
      return out;
    }
    case BaselineMethod::top_abs_ig_tokens:
    case BaselineMethod::top_signed_ig_tokens: {
      const auto cot = igs.cot_igs();
      if (cot.size() != trace.token_count()) {
        throw Error(ErrorKind::join, fmt::format("trace '{}': {} IGs for {} tokens", trace.trace_id, cot.size(),
                                                 trace.token_count()));
      }
      std::vector<double> key(cot.begin(), cot.end());
      if (policy.method == BaselineMethod::top_abs_ig_tokens) {
        for (double& v : key) v = std::abs(v);
      }
      const auto order = rank_descending(key);
      std::vector<std::uint8_t> bits(mask_domain(trace), 0);
      const std::size_t n = ceil_share(policy.token_ratio, trace.token_count());
      for (std::size_t i = 0; i < n; ++i) bits[order[i]] = 1;
      if (include_boundaries) {
        for (const auto& s : trace.segments) {
          if (!s.is_first && !s.is_last) continue;
          for (std::size_t t = s.first; t <= s.last; ++t) bits[t] = 1;
        }
      }
      for (std::size_t t = trace.token_count(); t < bits.size(); ++t) bits[t] = 1;
      out.token_mask = LossMask::from_bits(trace.trace_id, bits);
      return out;
    }
    default:
      throw Error(ErrorKind::config,
                  fmt::format("'{}' is not an ablation selector", to_string(policy.method)));
  }
}

ReasoningTrace remove_segments(const ReasoningTrace& trace, const std::set<std::size_t>& drop) {
  ReasoningTrace out;
  out.trace_id = trace.trace_id;
  out.query = trace.query;
  out.answer = trace.answer;
  out.answer_tokens = trace.answer_tokens;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (const auto& seg : trace.segments) {
    if (drop.contains(seg.seg_index)) continue;
    const std::size_t shift_to = out.cot.size();
    out.cot.append(trace.segment_text(seg.seg_index));
    const std::size_t first = out.tokens.size();
    for (std::size_t t = seg.first; t <= seg.last; ++t) {
      Token tok = trace.tokens[t];
      tok.index = out.tokens.size();
      tok.span.begin = tok.span.begin - seg.chars.begin + shift_to;
      tok.span.end = std::min(tok.span.end - seg.chars.begin + shift_to, shift_to + seg.chars.size());
      out.tokens.push_back(std::move(tok));
    }
    ranges.emplace_back(first, out.tokens.size() - 1);
  }
  if (!ranges.empty()) out.segments = segments_from_ranges(out.tokens, out.cot.size(), ranges);
  return out;
}

PruneResult prune_trace(const ReasoningTrace& trace, const std::set<std::size_t>& important,
                        std::span<const SegmentScore> scores, double target) {
  if (scores.size() != trace.segment_count()) {
    throw Error(ErrorKind::join, fmt::format("trace '{}': {} scores for {} segments", trace.trace_id, scores.size(),
                                             trace.segment_count()));
  }
  for (std::size_t m : important) {
    if (m >= trace.segment_count()) {
      throw Error(ErrorKind::join, fmt::format("trace '{}': important segment {} out of range", trace.trace_id, m));
    }
  }
  std::vector<std::size_t> candidates;
  for (const auto& s : trace.segments) {
    if (!important.contains(s.seg_index) && !s.is_first && !s.is_last) candidates.push_back(s.seg_index);
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    return scores[a].normalized_strength < scores[b].normalized_strength;
  });
  const double T = static_cast<double>(trace.token_count());
  std::set<std::size_t> drop;
  std::size_t dropped_tokens = 0;
  PruneResult r;
  for (std::size_t m : candidates) {
    if (static_cast<double>(dropped_tokens) >= target * T) break;
    drop.insert(m);
    dropped_tokens += trace.segments[m].n_tokens();
  }
  r.dropped.assign(drop.begin(), drop.end());
  r.dropped_fraction = static_cast<double>(dropped_tokens) / T;
  r.shortfall = r.dropped_fraction < target;
  r.trace = drop.empty() ? trace : remove_segments(trace, drop);
  return r;
}

}  // namespace cotig
