#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cotig/tokenizer.hpp"
#include "cotig/trace.hpp"

namespace cotig {

/// Rows are sequence positions, columns embedding (or vocabulary) dimensions.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SamplingConfig {
  double temperature = 1.0;
  double top_p = 1.0;
  std::size_t max_new_tokens = 16;
  std::uint64_t seed = 0;
  double repetition_penalty = 1.0;
  /// Temperature -> 0 limit: argmax decoding, lowest id on ties.
  bool greedy = false;

  void validate() const;
};

/// Differentiable scorer: F(context, target) is the summed log-probability of
/// the target tokens, differentiable with respect to the context embeddings.
///
/// Implementations are immutable after construction; all const members must be
/// safe to call concurrently.
class GradOracle {
 public:
  virtual ~GradOracle() = default;

  [[nodiscard]] virtual std::string model_id() const = 0;
  [[nodiscard]] virtual std::size_t vocab_size() const = 0;
  [[nodiscard]] virtual std::size_t embed_dim() const = 0;
  [[nodiscard]] virtual std::size_t context_len() const = 0;
  [[nodiscard]] virtual const ByteTokenizer& tokenizer() const = 0;

  [[nodiscard]] virtual Vector embed(TokenId id) const = 0;
  [[nodiscard]] virtual Vector pad_embedding() const { return embed(special::pad); }
  [[nodiscard]] Matrix embed_sequence(std::span<const TokenId> ids) const;

  /// `embeddings` (if non-null) replaces the context token embeddings; it must
  /// be context.size() x embed_dim(). Target tokens always use their own embedding.
  [[nodiscard]] virtual double score_target(std::span<const TokenId> context, std::span<const TokenId> target,
                                            const Matrix* embeddings = nullptr) const = 0;

  /// dF/d(context embeddings), context.size() x embed_dim().
  [[nodiscard]] virtual Matrix grad_wrt_embeddings(std::span<const TokenId> context,
                                                   std::span<const TokenId> target,
                                                   const Matrix& embeddings) const = 0;

  /// Row p holds log P(next | seq[0..p]) over the vocabulary. Only language
  /// models implement this; scorer-only oracles throw Error(config).
  [[nodiscard]] virtual Matrix next_token_log_probs(std::span<const TokenId> seq) const;

 protected:
  void check_capacity(std::size_t context, std::size_t target) const;
  void check_embeddings(std::size_t context, const Matrix* embeddings) const;
};

/// Answer-forcing frame appended after the cot: the marker id followed by the
/// encoded `forcing_text`.
struct PromptLayout {
  std::string forcing_text = "final answer:";
};

/// Token ids of one trace laid out as
///   [bos] query cot [marker] forcing answer
/// with the offsets of each region.
struct SequenceLayout {
  std::vector<TokenId> ids;
  std::size_t query_begin = 0;
  std::size_t cot_begin = 0;
  std::size_t cot_end = 0;
  std::size_t answer_begin = 0;

  [[nodiscard]] std::span<const TokenId> context() const { return {ids.data(), answer_begin}; }
  [[nodiscard]] std::span<const TokenId> target() const {
    return {ids.data() + answer_begin, ids.size() - answer_begin};
  }
};

SequenceLayout layout_trace(const GradOracle& oracle, const ReasoningTrace& trace, const PromptLayout& prompt = {});

/// Context for answer forcing after a prefix of the cot: [bos] query cot[0..n) [marker] forcing.
std::vector<TokenId> forcing_context(const GradOracle& oracle, const ReasoningTrace& trace, std::size_t cot_tokens,
                                     const PromptLayout& prompt = {});

/// Draws k continuations of `context`. Sample i uses a seed derived from
/// (cfg.seed, i), so results do not depend on call order. Generation stops at
/// eos (not included) or max_new_tokens.
std::vector<std::vector<TokenId>> sample_answers(const GradOracle& oracle, std::span<const TokenId> context,
                                                 const SamplingConfig& cfg, std::size_t k);

/// Per-sample seed derivation shared by all sampling call sites.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

/// Compares grad_wrt_embeddings against central differences on a random
/// probe drawn from `seed`. Returns ||analytic - numeric||_inf divided by the
/// larger of the two inf-norms (0/0 -> 0).
double fd_check(const GradOracle& oracle, std::uint64_t seed, double eps);

/// Shannon entropy (nats) of one log-probability row.
double entropy_of(const Eigen::Ref<const Eigen::RowVectorXd>& log_probs);

}  // namespace cotig
