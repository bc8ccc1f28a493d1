#include "cotig/oracle_hooks.hpp"

#include <fmt/format.h>

#include "cotig/error.hpp"
#include "cotig/random.hpp"

namespace cotig {

LinearHook::LinearHook(std::uint64_t seed, std::size_t dim, std::size_t context_len)
    : seed_(seed), context_len_(context_len), tokenizer_(260) {
  if (dim == 0) throw Error(ErrorKind::config, "linear hook needs dim >= 1");
  Rng rng(seed);
  w_ = Vector(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < w_.size(); ++i) w_(i) = rng.normal();
  table_ = Matrix(static_cast<Eigen::Index>(tokenizer_.vocab_size()), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < table_.size(); ++i) table_.data()[i] = rng.normal();
}

std::string LinearHook::model_id() const { return fmt::format("hook-linear/seed={}/d={}", seed_, w_.size()); }

Vector LinearHook::embed(TokenId id) const {
  if (id < 0 || id >= table_.rows()) throw Error(ErrorKind::domain, fmt::format("token id {} out of range", id));
  return table_.row(id).transpose();
}

double LinearHook::score_target(std::span<const TokenId> context, std::span<const TokenId> target,
                                const Matrix* embeddings) const {
  check_capacity(context.size(), target.size());
  check_embeddings(context.size(), embeddings);
  const Matrix x = embeddings != nullptr ? *embeddings : embed_sequence(context);
  double total = 0.0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) total += x.row(r).dot(w_);
  return total;
}

Matrix LinearHook::grad_wrt_embeddings(std::span<const TokenId> context, std::span<const TokenId> target,
                                       const Matrix& embeddings) const {
  check_capacity(context.size(), target.size());
  check_embeddings(context.size(), &embeddings);
  return w_.transpose().replicate(embeddings.rows(), 1);
}

QuadraticHook::QuadraticHook(double value, std::size_t context_len)
    : value_(value), context_len_(context_len), tokenizer_(260) {}

std::string QuadraticHook::model_id() const { return fmt::format("hook-quadratic/value={}", value_); }

Vector QuadraticHook::embed(TokenId id) const {
  return Vector::Constant(1, id == special::pad ? 0.0 : value_);
}

double QuadraticHook::score_target(std::span<const TokenId> context, std::span<const TokenId> target,
                                   const Matrix* embeddings) const {
  check_capacity(context.size(), target.size());
  check_embeddings(context.size(), embeddings);
  const Matrix x = embeddings != nullptr ? *embeddings : embed_sequence(context);
  return x.squaredNorm();
}

Matrix QuadraticHook::grad_wrt_embeddings(std::span<const TokenId> context, std::span<const TokenId> target,
                                          const Matrix& embeddings) const {
  check_capacity(context.size(), target.size());
  check_embeddings(context.size(), &embeddings);
  return 2.0 * embeddings;
}

}  // namespace cotig
