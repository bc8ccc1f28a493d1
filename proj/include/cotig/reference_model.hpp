#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cotig/oracle.hpp"

namespace cotig {

struct ModelDims {
  std::size_t vocab = 260;
  std::size_t dim = 16;
  std::size_t context_len = 512;

  void validate() const;
};

/// Tiny causal language model: token + learned positional embeddings, one
/// single-head causal self-attention block and a tanh feed-forward block, both
/// residual, then a linear softmax head. All arithmetic is 64-bit.
class ReferenceModel final : public GradOracle {
 public:
  struct Params {
    Matrix token_embedding;  // V x d; the pad row starts at zero
    Matrix position_embedding;  // C x d
    Matrix wq, wk, wv, wo;  // d x d
    Matrix w1;  // h x d
    Vector b1;
    Matrix w2;  // d x h
    Vector b2;
    Matrix w_out;  // V x d
    Vector b_out;

    template <typename Fn>
    void for_each(Fn&& fn) {
      fn(token_embedding); fn(position_embedding); fn(wq); fn(wk); fn(wv); fn(wo);
      fn(w1); fn(b1); fn(w2); fn(b2); fn(w_out); fn(b_out);
    }
    template <typename Fn>
    void for_each(Fn&& fn) const {
      fn(token_embedding); fn(position_embedding); fn(wq); fn(wk); fn(wv); fn(wo);
      fn(w1); fn(b1); fn(w2); fn(b2); fn(w_out); fn(b_out);
    }
  };

  /// Seeded initialization; identical seed and dims give bit-identical parameters.
  static ReferenceModel init(std::uint64_t seed, const ModelDims& dims);
  /// All parameters zero: uniform next-token distribution at every position.
  static ReferenceModel zeroed(const ModelDims& dims);
  /// All parameters zero except a large output bias on `token`.
  static ReferenceModel peaked(const ModelDims& dims, TokenId token, double logit);

  [[nodiscard]] std::string model_id() const override { return model_id_; }
  [[nodiscard]] std::size_t vocab_size() const override { return dims_.vocab; }
  [[nodiscard]] std::size_t embed_dim() const override { return dims_.dim; }
  [[nodiscard]] std::size_t context_len() const override { return dims_.context_len; }
  [[nodiscard]] const ByteTokenizer& tokenizer() const override { return tokenizer_; }
  [[nodiscard]] Vector embed(TokenId id) const override;

  [[nodiscard]] double score_target(std::span<const TokenId> context, std::span<const TokenId> target,
                                    const Matrix* embeddings = nullptr) const override;
  [[nodiscard]] Matrix grad_wrt_embeddings(std::span<const TokenId> context, std::span<const TokenId> target,
                                           const Matrix& embeddings) const override;
  [[nodiscard]] Matrix next_token_log_probs(std::span<const TokenId> seq) const override;

  [[nodiscard]] const ModelDims& dims() const noexcept { return dims_; }
  [[nodiscard]] const Params& params() const noexcept { return params_; }
  /// FNV-1a over the bit patterns of every parameter.
  [[nodiscard]] std::uint64_t checksum() const;

  /// Mean next-token NLL over `loss_from..seq.size()` positions, with gradients
  /// for every parameter. Used by training.
  double loss_and_grads(std::span<const TokenId> seq, std::size_t loss_from, Params& grads) const;

  Params& mutable_params() noexcept { return params_; }
  void set_model_id(std::string id) { model_id_ = std::move(id); }

 private:
  ReferenceModel(const ModelDims& dims, std::string model_id);

  struct Cache;
  void forward(std::span<const TokenId> seq, const Matrix& token_rows, Eigen::Index from, Cache& c) const;
  /// Backpropagates dlogits; returns d(token rows). Accumulates parameter grads when `grads` is non-null.
  Matrix backward(std::span<const TokenId> seq, const Cache& c, const Matrix& dlogits, Params* grads) const;
  Matrix token_rows(std::span<const TokenId> context, std::span<const TokenId> target, const Matrix* embeddings) const;

  ModelDims dims_;
  std::string model_id_;
  ByteTokenizer tokenizer_;
  Params params_;
};

struct TrainConfig {
  std::size_t steps = 300;
  double learning_rate = 3e-3;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip = 1.0;
};

/// Language-model training with Adam; step s trains on the sequence chosen by
/// a seeded draw. Returns the per-step loss. The model id gains a suffix
/// recording the run.
std::vector<double> train(ReferenceModel& model, const std::vector<std::vector<TokenId>>& sequences,
                          const TrainConfig& cfg);

}  // namespace cotig
