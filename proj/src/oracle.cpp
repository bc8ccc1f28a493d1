#include "cotig/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "cotig/error.hpp"
#include "cotig/random.hpp"

namespace cotig {

void SamplingConfig::validate() const {
  if (!(temperature > 0.0) && !greedy) throw Error(ErrorKind::config, "temperature must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorKind::config, "top_p must lie in (0, 1]");
  if (!(repetition_penalty >= 1.0)) throw Error(ErrorKind::config, "repetition_penalty must be >= 1");
}

Matrix GradOracle::embed_sequence(std::span<const TokenId> ids) const {
  Matrix out(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(embed_dim()));
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = embed(ids[i]).transpose();
  return out;
}

Matrix GradOracle::next_token_log_probs(std::span<const TokenId>) const {
  throw Error(ErrorKind::config, fmt::format("oracle '{}' is not a language model", model_id()));
}

void GradOracle::check_capacity(std::size_t context, std::size_t target) const {
  if (context + target > context_len()) {
    throw Error(ErrorKind::capacity, fmt::format("sequence of {} tokens exceeds context length {} of '{}'",
                                                 context + target, context_len(), model_id()));
  }
  if (context == 0 && target > 0) throw Error(ErrorKind::capacity, "scoring a target needs a non-empty context");
}

void GradOracle::check_embeddings(std::size_t context, const Matrix* embeddings) const {
  if (embeddings != nullptr && (static_cast<std::size_t>(embeddings->rows()) != context ||
                                static_cast<std::size_t>(embeddings->cols()) != embed_dim())) {
    throw Error(ErrorKind::capacity, fmt::format("embedding override is {}x{}, expected {}x{}", embeddings->rows(),
                                                 embeddings->cols(), context, embed_dim()));
  }
}

SequenceLayout layout_trace(const GradOracle& oracle, const ReasoningTrace& trace, const PromptLayout& prompt) {
  const auto& tok = oracle.tokenizer();
  SequenceLayout l;
  l.ids.push_back(special::bos);
  l.query_begin = l.ids.size();
  for (TokenId id : tok.encode(trace.query)) l.ids.push_back(id);
  l.cot_begin = l.ids.size();
  for (const auto& t : trace.tokens) l.ids.push_back(tok.token_id(t.text));
  l.cot_end = l.ids.size();
  l.ids.push_back(special::answer_marker);
  for (TokenId id : tok.encode(prompt.forcing_text)) l.ids.push_back(id);
  l.answer_begin = l.ids.size();
  for (const auto& t : trace.answer_tokens) l.ids.push_back(tok.token_id(t.text));
  return l;
}

std::vector<TokenId> forcing_context(const GradOracle& oracle, const ReasoningTrace& trace, std::size_t cot_tokens,
                                     const PromptLayout& prompt) {
  const auto& tok = oracle.tokenizer();
  std::vector<TokenId> ids{special::bos};
  for (TokenId id : tok.encode(trace.query)) ids.push_back(id);
  for (std::size_t i = 0; i < cot_tokens && i < trace.tokens.size(); ++i) ids.push_back(tok.token_id(trace.tokens[i].text));
  ids.push_back(special::answer_marker);
  for (TokenId id : tok.encode(prompt.forcing_text)) ids.push_back(id);
  return ids;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(base) ^ a) ^ (b * 0x2545f4914f6cdd1dULL));
}

double entropy_of(const Eigen::Ref<const Eigen::RowVectorXd>& log_probs) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < log_probs.size(); ++i) {
    const double lp = log_probs(i);
    if (std::isfinite(lp)) h -= std::exp(lp) * lp;
  }
  return h;
}

namespace {

TokenId draw_next(Eigen::RowVectorXd logits, const std::vector<TokenId>& history, const SamplingConfig& cfg,
                  Rng& rng) {
  if (cfg.repetition_penalty > 1.0) {
    std::vector<bool> seen(static_cast<std::size_t>(logits.size()), false);
    for (TokenId id : history) {
      if (id >= 0 && id < logits.size() && !seen[static_cast<std::size_t>(id)]) {
        seen[static_cast<std::size_t>(id)] = true;
        double& v = logits(id);
        v = v > 0.0 ? v / cfg.repetition_penalty : v * cfg.repetition_penalty;
      }
    }
  }
  if (cfg.greedy) {
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    return static_cast<TokenId>(best);
  }
  logits /= cfg.temperature;
  const double mx = logits.maxCoeff();
  Eigen::RowVectorXd p = (logits.array() - mx).exp();
  p /= p.sum();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(p.size()));
  std::iota(order.begin(), order.end(), 0);
  std::size_t keep = order.size();
  if (cfg.top_p < 1.0) {
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return p(a) > p(b); });
    double mass = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      mass += p(order[i]);
      if (mass >= cfg.top_p) {
        keep = i + 1;
        break;
      }
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < keep; ++i) total += p(order[i]);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < keep; ++i) {
    u -= p(order[i]);
    if (u < 0.0) return static_cast<TokenId>(order[i]);
  }
  return static_cast<TokenId>(order[keep - 1]);
}

}  // namespace

std::vector<std::vector<TokenId>> sample_answers(const GradOracle& oracle, std::span<const TokenId> context,
                                                 const SamplingConfig& cfg, std::size_t k) {
  cfg.validate();
  if (k == 0) throw Error(ErrorKind::config, "sample count must be at least 1");
  if (context.empty()) throw Error(ErrorKind::capacity, "sampling needs a non-empty context");
  const std::size_t budget = std::min(cfg.max_new_tokens, oracle.context_len() > context.size()
                                                              ? oracle.context_len() - context.size() : 0);
  std::vector<std::vector<TokenId>> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    Rng rng(derive_seed(cfg.seed, i));
    std::vector<TokenId> seq(context.begin(), context.end());
    std::vector<TokenId> generated;
    for (std::size_t step = 0; step < budget; ++step) {
      const Matrix lp = oracle.next_token_log_probs(seq);
      const TokenId next = draw_next(lp.row(lp.rows() - 1), seq, cfg, rng);
      if (next == special::eos) break;
      generated.push_back(next);
      seq.push_back(next);
    }
    out.push_back(std::move(generated));
  }
  return out;
}

double fd_check(const GradOracle& oracle, std::uint64_t seed, double eps) {
  Rng rng(seed);
  const std::size_t max_ctx = std::min<std::size_t>(10, oracle.context_len() - 2);
  const std::size_t ctx_len = 2 + rng.below(max_ctx - 1);
  const std::size_t tgt_len = 1 + rng.below(std::min<std::size_t>(3, oracle.context_len() - ctx_len));
  const auto V = static_cast<std::uint64_t>(oracle.vocab_size());
  std::vector<TokenId> context{special::bos};
  while (context.size() < ctx_len) context.push_back(static_cast<TokenId>(special::count + rng.below(V - special::count)));
  std::vector<TokenId> target;
  while (target.size() < tgt_len) target.push_back(static_cast<TokenId>(special::count + rng.below(V - special::count)));

  Matrix x = oracle.embed_sequence(context);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += 0.1 * rng.normal();

  const Matrix analytic = oracle.grad_wrt_embeddings(context, target, x);
  Matrix numeric(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Matrix plus = x;
      Matrix minus = x;
      plus(r, c) += eps;
      minus(r, c) -= eps;
      numeric(r, c) = (oracle.score_target(context, target, &plus) - oracle.score_target(context, target, &minus)) /
                      (2.0 * eps);
    }
  }
  const double scale = std::max(analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
  const double diff = (analytic - numeric).cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  return diff / scale;
}

}  // namespace cotig
