#include "cotig/reference_model.hpp"

#include <bit>
#include <cmath>

#include <fmt/format.h>

#include "cotig/error.hpp"
#include "cotig/random.hpp"

namespace cotig {

namespace {

using Index = Eigen::Index;

constexpr std::size_t kMaxVocab = 1 << 16;
constexpr std::size_t kMaxDim = 512;
constexpr std::size_t kMaxContext = 1 << 14;

Index ix(std::size_t v) { return static_cast<Index>(v); }

// In-place row-wise log-softmax.
void log_softmax_rows(Matrix& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    const double lse = mx + std::log((m.row(r).array() - mx).exp().sum());
    m.row(r).array() -= lse;
  }
}

}  // namespace

void ModelDims::validate() const {
  if (vocab < 4 || vocab > kMaxVocab) {
    throw Error(ErrorKind::config, fmt::format("vocab size {} outside [4, {}]", vocab, kMaxVocab));
  }
  if (vocab <= static_cast<std::size_t>(special::count)) {
    throw Error(ErrorKind::config, "vocab size must exceed the 4 reserved ids to hold any byte");
  }
  if (dim < 2 || dim > kMaxDim) throw Error(ErrorKind::config, fmt::format("embed dim {} outside [2, {}]", dim, kMaxDim));
  if (context_len < 2 || context_len > kMaxContext) {
    throw Error(ErrorKind::config, fmt::format("context length {} outside [2, {}]", context_len, kMaxContext));
  }
}

// Rows from `from` onward are the query rows: attention, feed-forward and head
// are evaluated only there. Keys and values cover the whole sequence.
struct ReferenceModel::Cache {
  Index from = 0;
  Matrix h0, k, v;  // L rows
  Matrix q, attn, z, h1, u, g, h2, logp;  // L - from rows
};

ReferenceModel::ReferenceModel(const ModelDims& dims, std::string model_id)
    : dims_(dims), model_id_(std::move(model_id)), tokenizer_((dims.validate(), dims.vocab)) {
  const Index V = ix(dims.vocab), d = ix(dims.dim), C = ix(dims.context_len), h = 4 * d;
  params_.token_embedding = Matrix::Zero(V, d);
  params_.position_embedding = Matrix::Zero(C, d);
  params_.wq = Matrix::Zero(d, d);
  params_.wk = Matrix::Zero(d, d);
  params_.wv = Matrix::Zero(d, d);
  params_.wo = Matrix::Zero(d, d);
  params_.w1 = Matrix::Zero(h, d);
  params_.b1 = Vector::Zero(h);
  params_.w2 = Matrix::Zero(d, h);
  params_.b2 = Vector::Zero(d);
  params_.w_out = Matrix::Zero(V, d);
  params_.b_out = Vector::Zero(V);
}

ReferenceModel ReferenceModel::init(std::uint64_t seed, const ModelDims& dims) {
  ReferenceModel m(dims, fmt::format("ref-tfm-v1/seed={}/V={}/d={}/C={}", seed, dims.vocab, dims.dim,
                                     dims.context_len));
  Rng rng(seed);
  const double d = static_cast<double>(dims.dim);
  auto fill = [&](Matrix& w, double stddev) {
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = stddev * rng.normal();
  };
  auto& p = m.params_;
  fill(p.token_embedding, 0.5);
  p.token_embedding.row(special::pad).setZero();
  fill(p.position_embedding, 0.1);
  fill(p.wq, 1.0 / std::sqrt(d));
  fill(p.wk, 1.0 / std::sqrt(d));
  fill(p.wv, 1.0 / std::sqrt(d));
  fill(p.wo, 0.5 / std::sqrt(d));
  fill(p.w1, 1.0 / std::sqrt(d));
  fill(p.w2, 0.5 / std::sqrt(4.0 * d));
  fill(p.w_out, 1.0 / std::sqrt(d));
  return m;
}

ReferenceModel ReferenceModel::zeroed(const ModelDims& dims) {
  return ReferenceModel(dims, fmt::format("ref-tfm-v1/zeroed/V={}/d={}/C={}", dims.vocab, dims.dim, dims.context_len));
}

ReferenceModel ReferenceModel::peaked(const ModelDims& dims, TokenId token, double logit) {
  ReferenceModel m(dims, fmt::format("ref-tfm-v1/peaked={}/V={}/d={}/C={}", token, dims.vocab, dims.dim,
                                     dims.context_len));
  if (token < 0 || static_cast<std::size_t>(token) >= dims.vocab) throw Error(ErrorKind::config, "peak token out of range");
  m.params_.b_out(token) = logit;
  return m;
}

Vector ReferenceModel::embed(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= dims_.vocab) {
    throw Error(ErrorKind::domain, fmt::format("token id {} outside vocabulary of {}", id, dims_.vocab));
  }
  return params_.token_embedding.row(id).transpose();
}

std::uint64_t ReferenceModel::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  params_.for_each([&](const auto& m) {
    for (Index i = 0; i < m.size(); ++i) {
      auto bits = std::bit_cast<std::uint64_t>(m.data()[i]);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffU;
        h *= 1099511628211ULL;
      }
    }
  });
  return h;
}

Matrix ReferenceModel::token_rows(std::span<const TokenId> context, std::span<const TokenId> target,
                                  const Matrix* embeddings) const {
  Matrix rows(ix(context.size() + target.size()), ix(dims_.dim));
  for (std::size_t i = 0; i < context.size(); ++i) {
    rows.row(ix(i)) = embeddings != nullptr ? Matrix(embeddings->row(ix(i))) : Matrix(embed(context[i]).transpose());
  }
  for (std::size_t i = 0; i < target.size(); ++i) rows.row(ix(context.size() + i)) = embed(target[i]).transpose();
  return rows;
}

void ReferenceModel::forward(std::span<const TokenId> seq, const Matrix& token_rows, Index from, Cache& c) const {
  const auto& p = params_;
  const Index L = ix(seq.size());
  const Index R = L - from;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims_.dim));
  c.from = from;
  c.h0 = token_rows + p.position_embedding.topRows(L);
  c.k = c.h0 * p.wk.transpose();
  c.v = c.h0 * p.wv.transpose();
  c.q = c.h0.bottomRows(R) * p.wq.transpose();
  c.attn = Matrix::Zero(R, L);
  const Matrix scores = (c.q * c.k.transpose()) * scale;
  for (Index i = 0; i < R; ++i) {
    const auto row = scores.row(i).head(from + i + 1);
    const double mx = row.maxCoeff();
    Eigen::RowVectorXd e = (row.array() - mx).exp();
    c.attn.row(i).head(from + i + 1) = e / e.sum();
  }
  c.z = c.attn * c.v;
  c.h1 = c.h0.bottomRows(R) + c.z * p.wo.transpose();
  c.u = (c.h1 * p.w1.transpose()).rowwise() + p.b1.transpose();
  c.g = c.u.array().tanh();
  c.h2 = c.h1 + ((c.g * p.w2.transpose()).rowwise() + p.b2.transpose());
  c.logp = (c.h2 * p.w_out.transpose()).rowwise() + p.b_out.transpose();
  log_softmax_rows(c.logp);
}

Matrix ReferenceModel::backward(std::span<const TokenId> seq, const Cache& c, const Matrix& dlogits,
                                Params* grads) const {
  const auto& p = params_;
  const Index L = ix(seq.size());
  const Index from = c.from;
  const Index R = L - from;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims_.dim));

  Matrix dh2 = dlogits * p.w_out;
  Matrix dg = dh2 * p.w2;
  Matrix du = dg.array() * (1.0 - c.g.array().square());
  Matrix dh1 = dh2 + du * p.w1;
  Matrix dz = dh1 * p.wo;
  Matrix dattn = dz * c.v.transpose();
  Matrix dv = c.attn.transpose() * dz;
  Matrix dscores = Matrix::Zero(R, L);
  for (Index i = 0; i < R; ++i) {
    const auto a = c.attn.row(i).head(from + i + 1);
    const auto da = dattn.row(i).head(from + i + 1);
    const double dot = a.dot(da);
    dscores.row(i).head(from + i + 1) = a.array() * (da.array() - dot);
  }
  dscores *= scale;
  Matrix dq = dscores * c.k;
  Matrix dk = dscores.transpose() * c.q;
  Matrix dh0 = dk * p.wk + dv * p.wv;
  dh0.bottomRows(R) += dh1 + dq * p.wq;

  if (grads != nullptr) {
    grads->w_out += dlogits.transpose() * c.h2;
    grads->b_out += dlogits.colwise().sum().transpose();
    grads->w2 += dh2.transpose() * c.g;
    grads->b2 += dh2.colwise().sum().transpose();
    grads->w1 += du.transpose() * c.h1;
    grads->b1 += du.colwise().sum().transpose();
    grads->wo += dh1.transpose() * c.z;
    grads->wq += dq.transpose() * c.h0.bottomRows(R);
    grads->wk += dk.transpose() * c.h0;
    grads->wv += dv.transpose() * c.h0;
    grads->position_embedding.topRows(L) += dh0;
    for (Index i = 0; i < L; ++i) grads->token_embedding.row(seq[static_cast<std::size_t>(i)]) += dh0.row(i);
  }
  return dh0;
}

double ReferenceModel::score_target(std::span<const TokenId> context, std::span<const TokenId> target,
                                    const Matrix* embeddings) const {
  check_capacity(context.size(), target.size());
  check_embeddings(context.size(), embeddings);
  if (target.empty()) return 0.0;
  std::vector<TokenId> seq(context.begin(), context.end());
  seq.insert(seq.end(), target.begin(), target.end());
  // Only the rows predicting target tokens are needed.
  const Index from = ix(context.size()) - 1;
  Cache c;
  forward(seq, token_rows(context, target, embeddings), from, c);
  double total = 0.0;
  for (std::size_t t = 0; t < target.size(); ++t) total += c.logp(ix(t), target[t]);
  return total;
}

Matrix ReferenceModel::grad_wrt_embeddings(std::span<const TokenId> context, std::span<const TokenId> target,
                                           const Matrix& embeddings) const {
  check_capacity(context.size(), target.size());
  check_embeddings(context.size(), &embeddings);
  if (target.empty()) return Matrix::Zero(ix(context.size()), ix(dims_.dim));
  std::vector<TokenId> seq(context.begin(), context.end());
  seq.insert(seq.end(), target.begin(), target.end());
  const Index from = ix(context.size()) - 1;
  Cache c;
  forward(seq, token_rows(context, target, &embeddings), from, c);
  // d/dlogits of sum_t log softmax(logits)[target_t] = onehot - softmax
  Matrix dlogits = Matrix::Zero(c.logp.rows(), ix(dims_.vocab));
  for (std::size_t t = 0; t < target.size(); ++t) {
    const Index row = ix(t);
    dlogits.row(row) = -c.logp.row(row).array().exp();
    dlogits(row, target[t]) += 1.0;
  }
  const Matrix dx = backward(seq, c, dlogits, nullptr);
  return dx.topRows(ix(context.size()));
}

Matrix ReferenceModel::next_token_log_probs(std::span<const TokenId> seq) const {
  check_capacity(seq.size(), 0);
  if (seq.empty()) return Matrix(0, ix(dims_.vocab));
  Cache c;
  forward(seq, token_rows(seq, {}, nullptr), 0, c);
  return std::move(c.logp);
}

double ReferenceModel::loss_and_grads(std::span<const TokenId> seq, std::size_t loss_from, Params& grads) const {
  check_capacity(seq.size(), 0);
  if (loss_from == 0) loss_from = 1;
  if (seq.size() <= loss_from) return 0.0;
  Cache c;
  forward(seq, token_rows(seq, {}, nullptr), 0, c);
  const double n = static_cast<double>(seq.size() - loss_from);
  Matrix dlogits = Matrix::Zero(ix(seq.size()), ix(dims_.vocab));
  double loss = 0.0;
  for (std::size_t t = loss_from; t < seq.size(); ++t) {
    const Index row = ix(t - 1);
    loss -= c.logp(row, seq[t]);
    dlogits.row(row) = c.logp.row(row).array().exp() / n;
    dlogits(row, seq[t]) -= 1.0 / n;
  }
  backward(seq, c, dlogits, &grads);
  return loss / n;
}

std::vector<double> train(ReferenceModel& model, const std::vector<std::vector<TokenId>>& sequences,
                          const TrainConfig& cfg) {
  if (sequences.empty()) throw Error(ErrorKind::domain, "training needs at least one sequence");
  auto& params = model.mutable_params();
  auto zero_like = [&] {
    ReferenceModel::Params z = params;
    z.for_each([](auto& m) { m.setZero(); });
    return z;
  };
  ReferenceModel::Params m1 = zero_like();
  ReferenceModel::Params m2 = zero_like();
  Rng rng(cfg.seed);
  std::vector<double> losses;
  losses.reserve(cfg.steps);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const auto& seq = sequences[rng.below(sequences.size())];
    ReferenceModel::Params grads = zero_like();
    losses.push_back(model.loss_and_grads(seq, 1, grads));

    double norm2 = 0.0;
    grads.for_each([&](const auto& g) { norm2 += g.squaredNorm(); });
    const double norm = std::sqrt(norm2);
    const double clip = (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;

    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    // Parameters mix Matrix and Vector members, so walk them by raw storage.
    std::vector<std::pair<double*, Index>> pp, gg, aa, bb;
    params.for_each([&](auto& x) { pp.emplace_back(x.data(), x.size()); });
    grads.for_each([&](auto& x) { gg.emplace_back(x.data(), x.size()); });
    m1.for_each([&](auto& x) { aa.emplace_back(x.data(), x.size()); });
    m2.for_each([&](auto& x) { bb.emplace_back(x.data(), x.size()); });
    for (std::size_t k = 0; k < pp.size(); ++k) {
      for (Index i = 0; i < pp[k].second; ++i) {
        const double g = gg[k].first[i] * clip;
        double& mo = aa[k].first[i];
        double& ve = bb[k].first[i];
        mo = cfg.beta1 * mo + (1.0 - cfg.beta1) * g;
        ve = cfg.beta2 * ve + (1.0 - cfg.beta2) * g * g;
        pp[k].first[i] -= cfg.learning_rate * (mo / bc1) / (std::sqrt(ve / bc2) + cfg.epsilon);
      }
    }
  }
  model.set_model_id(fmt::format("{}+lm(steps={},lr={},seed={})", model.model_id(), cfg.steps, cfg.learning_rate,
                                 cfg.seed));
  return losses;
}

}  // namespace cotig
