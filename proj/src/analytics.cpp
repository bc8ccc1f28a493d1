#include "cotig/analytics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <ostream>

#include <fmt/format.h>

#include "cotig/error.hpp"

namespace cotig {

namespace {

constexpr double kBleuEpsilon = 1e-9;

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(std::span<const std::string> words, std::size_t n) {
  NgramCounts counts;
  if (words.size() < n) return counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                      words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

TokenStats token_stats(const GradOracle& oracle, const ReasoningTrace& trace, const PromptLayout& prompt) {
  const SequenceLayout layout = layout_trace(oracle, trace, prompt);
  const Matrix logp = oracle.next_token_log_probs(std::span<const TokenId>(layout.ids.data(), layout.cot_end));
  TokenStats out;
  out.nll.reserve(trace.token_count());
  out.entropy.reserve(trace.token_count());
  for (std::size_t p = layout.cot_begin; p < layout.cot_end; ++p) {
    const auto row = static_cast<Eigen::Index>(p - 1);
    out.nll.push_back(-logp(row, layout.ids[p]));
    out.entropy.push_back(entropy_of(logp.row(row)));
  }
  return out;
}

std::vector<SegmentStats> segment_stats(const GradOracle& oracle, const ReasoningTrace& trace,
                                        const PromptLayout& prompt) {
  const TokenStats ts = token_stats(oracle, trace, prompt);
  std::vector<SegmentStats> out;
  out.reserve(trace.segment_count());
  for (const auto& seg : trace.segments) {
    SegmentStats s;
    s.seg_index = seg.seg_index;
    for (std::size_t t = seg.first; t <= seg.last; ++t) {
      s.mean_nll += ts.nll[t];
      s.mean_entropy += ts.entropy[t];
    }
    s.mean_nll /= static_cast<double>(seg.n_tokens());
    s.mean_entropy /= static_cast<double>(seg.n_tokens());
    s.bleu_vs_preceding = bleu_vs_preceding(trace, seg.seg_index);
    out.push_back(s);
  }
  return out;
}

std::vector<std::string> bleu_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

double bleu(std::span<const std::string> candidate, std::span<const std::vector<std::string>> references,
            std::size_t max_ngram) {
  if (candidate.empty() || references.empty() || max_ngram == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_ngram; ++n) {
    const NgramCounts cand = ngrams(candidate, n);
    std::size_t total = 0;
    for (const auto& [g, c] : cand) total += c;
    if (total == 0) continue;  // candidate shorter than n: order contributes log 1
    NgramCounts ceiling;
    for (const auto& ref : references) {
      for (const auto& [g, c] : ngrams(ref, n)) ceiling[g] = std::max(ceiling[g], c);
    }
    std::size_t matched = 0;
    for (const auto& [g, c] : cand) {
      const auto it = ceiling.find(g);
      if (it != ceiling.end()) matched += std::min(c, it->second);
    }
    const double p = matched == 0 ? kBleuEpsilon / static_cast<double>(total)
                                  : static_cast<double>(matched) / static_cast<double>(total);
    log_sum += std::log(p) / static_cast<double>(max_ngram);
  }
  const std::size_t c = candidate.size();
  std::size_t r = references.front().size();
  for (const auto& ref : references) {
    const auto diff = [&](std::size_t len) { return len > c ? len - c : c - len; };
    if (diff(ref.size()) < diff(r) || (diff(ref.size()) == diff(r) && ref.size() < r)) r = ref.size();
  }
  const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return std::clamp(bp * std::exp(log_sum), 0.0, 1.0);
}

double bleu_vs_preceding(const ReasoningTrace& trace, std::size_t seg_index, std::size_t max_ngram) {
  if (seg_index >= trace.segment_count()) {
    throw Error(ErrorKind::domain, fmt::format("segment {} outside trace '{}'", seg_index, trace.trace_id));
  }
  if (seg_index == 0) return 0.0;
  std::vector<std::vector<std::string>> refs;
  for (std::size_t m = 0; m < seg_index; ++m) refs.push_back(bleu_words(trace.segment_text(m)));
  const auto cand = bleu_words(trace.segment_text(seg_index));
  return bleu(cand, refs, max_ngram);
}

CdfTable strength_cdf(const std::vector<std::vector<double>>& normalized_strengths, std::size_t buckets) {
  if (buckets == 0) throw Error(ErrorKind::config, "strength CDF needs at least one bucket");
  CdfTable table;
  table.percentile.resize(buckets);
  table.cumulative.assign(buckets, 0.0);
  for (std::size_t b = 0; b < buckets; ++b) {
    table.percentile[b] = static_cast<double>(b + 1) / static_cast<double>(buckets);
  }
  for (const auto& strengths : normalized_strengths) {
    if (strengths.empty()) continue;
    std::vector<double> sorted = strengths;
    std::stable_sort(sorted.begin(), sorted.end(), std::greater<>());
    std::vector<double> cum(sorted.size() + 1, 0.0);
    for (std::size_t i = 0; i < sorted.size(); ++i) cum[i + 1] = cum[i] + sorted[i];
    const double M = static_cast<double>(sorted.size());
    for (std::size_t b = 0; b < buckets; ++b) {
      double value;
      if (b + 1 == buckets) {
        value = cum.back();
      } else {
        const double pos = table.percentile[b] * M;
        const auto lo = std::min(static_cast<std::size_t>(std::floor(pos)), sorted.size());
        const double frac = pos - static_cast<double>(lo);
        value = lo >= sorted.size() ? cum.back() : cum[lo] + frac * sorted[lo];
      }
      table.cumulative[b] += value;
    }
    ++table.traces;
  }
  if (table.traces > 0) {
    for (auto& v : table.cumulative) v /= static_cast<double>(table.traces);
    for (std::size_t b = 1; b < buckets; ++b) table.cumulative[b] = std::max(table.cumulative[b], table.cumulative[b - 1]);
  }
  return table;
}

std::string normalize_answer(std::string_view text) {
  std::string s(text);
  for (std::string_view wrapper : {"\\boxed", "\\text", "\\mathrm", "\\displaystyle", "\\left", "\\right", "\\(",
                                   "\\)", "\\[", "\\]", "$", "{", "}"}) {
    for (auto pos = s.find(wrapper); pos != std::string::npos; pos = s.find(wrapper, pos)) {
      s.erase(pos, wrapper.size());
    }
  }
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) {
    if (std::isspace(c)) continue;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::size_t decision_segment(const ReasoningTrace& trace) {
  const std::string answer = normalize_answer(trace.answer);
  if (answer.empty()) throw Error(ErrorKind::no_decision, fmt::format("trace '{}': empty answer", trace.trace_id));
  for (std::size_t m = 0; m < trace.segment_count(); ++m) {
    if (normalize_answer(trace.segment_text(m)).find(answer) != std::string::npos) return m;
  }
  throw Error(ErrorKind::no_decision,
              fmt::format("trace '{}': answer '{}' never appears in the cot", trace.trace_id, trace.answer));
}

PositionalReport positional_stats(std::span<const ReasoningTrace> traces,
                                  std::span<const SelectionResult> selections) {
  if (traces.size() != selections.size()) {
    throw Error(ErrorKind::join, fmt::format("{} traces but {} selections", traces.size(), selections.size()));
  }
  PositionalReport r;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& trace = traces[i];
    const auto& sel = selections[i];
    std::size_t decision = 0;
    try {
      decision = decision_segment(trace);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::no_decision) throw;
      ++r.excluded_traces;
      continue;
    }
    ++r.traces;
    std::vector<bool> in_prefix(trace.segment_count(), false);
    for (std::size_t k = 0; k < sel.k_star && k < sel.ranking.size(); ++k) in_prefix[sel.ranking[k]] = true;
    for (std::size_t m = 0; m < trace.segment_count(); ++m) {
      if (sel.important.contains(m)) {
        ++r.important;
        if (m > decision) ++r.important_after;
        continue;
      }
      ++r.unimportant;
      if (m < decision) ++r.unimportant_before;
      if (in_prefix[m]) {
        ++r.high_consistency;
        if (m > decision) ++r.high_consistency_after;
      } else {
        ++r.low_strength;
        if (m < decision) ++r.low_strength_before;
      }
    }
  }
  return r;
}

void write_positional_csv(std::ostream& out, const PositionalReport& r) {
  out << "metric,count,total,fraction,reference_value\n";
  auto row = [&](std::string_view name, std::size_t num, std::size_t den, std::string_view ref) {
    out << fmt::format("{},{},{},{},{}\n", name, num, den, PositionalReport::fraction(num, den), ref);
  };
  row("important_after_decision", r.important_after, r.important, "0.40");
  row("unimportant_before_decision", r.unimportant_before, r.unimportant, "0.57");
  row("low_strength_before_decision", r.low_strength_before, r.low_strength, "0.64");
  row("high_consistency_after_decision", r.high_consistency_after, r.high_consistency, "0.72");
  row("excluded_traces", r.excluded_traces, r.traces + r.excluded_traces, "");
}

}  // namespace cotig
