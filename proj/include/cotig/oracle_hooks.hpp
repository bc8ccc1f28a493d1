#pragma once

#include <cstdint>
#include <string>

#include "cotig/oracle.hpp"

namespace cotig {

/// Closed-form scorers for checking the attribution machinery.

/// F(x) = sum over context positions of w . x_p. Embeddings (pad included) and
/// w are seeded Gaussian draws.
class LinearHook final : public GradOracle {
 public:
  LinearHook(std::uint64_t seed, std::size_t dim, std::size_t context_len = 4096);

  [[nodiscard]] std::string model_id() const override;
  [[nodiscard]] std::size_t vocab_size() const override { return tokenizer_.vocab_size(); }
  [[nodiscard]] std::size_t embed_dim() const override { return static_cast<std::size_t>(w_.size()); }
  [[nodiscard]] std::size_t context_len() const override { return context_len_; }
  [[nodiscard]] const ByteTokenizer& tokenizer() const override { return tokenizer_; }
  [[nodiscard]] Vector embed(TokenId id) const override;
  [[nodiscard]] double score_target(std::span<const TokenId> context, std::span<const TokenId> target,
                                    const Matrix* embeddings = nullptr) const override;
  [[nodiscard]] Matrix grad_wrt_embeddings(std::span<const TokenId> context, std::span<const TokenId> target,
                                           const Matrix& embeddings) const override;

  [[nodiscard]] const Vector& weights() const noexcept { return w_; }

 private:
  std::uint64_t seed_;
  std::size_t context_len_;
  ByteTokenizer tokenizer_;
  Vector w_;
  Matrix table_;
};

/// One-dimensional F(x) = sum over context positions of x_p^2, with every
/// non-pad token embedded at `value` and pad at 0.
class QuadraticHook final : public GradOracle {
 public:
  explicit QuadraticHook(double value = 3.0, std::size_t context_len = 4096);

  [[nodiscard]] std::string model_id() const override;
  [[nodiscard]] std::size_t vocab_size() const override { return tokenizer_.vocab_size(); }
  [[nodiscard]] std::size_t embed_dim() const override { return 1; }
  [[nodiscard]] std::size_t context_len() const override { return context_len_; }
  [[nodiscard]] const ByteTokenizer& tokenizer() const override { return tokenizer_; }
  [[nodiscard]] Vector embed(TokenId id) const override;
  [[nodiscard]] double score_target(std::span<const TokenId> context, std::span<const TokenId> target,
                                    const Matrix* embeddings = nullptr) const override;
  [[nodiscard]] Matrix grad_wrt_embeddings(std::span<const TokenId> context, std::span<const TokenId> target,
                                           const Matrix& embeddings) const override;

 private:
  double value_;
  std::size_t context_len_;
  ByteTokenizer tokenizer_;
};

}  // namespace cotig
