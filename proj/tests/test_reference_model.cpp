#include <cmath>
#include <map>

#include "doctest.h"

#include "cotig/error.hpp"
#include "cotig/oracle_hooks.hpp"
#include "cotig/reference_model.hpp"

using namespace cotig;

namespace {

ModelDims small_dims() {
  ModelDims d;
  d.dim = 8;
  d.context_len = 64;
  return d;
}

std::vector<TokenId> ids(std::initializer_list<int> v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("seeded init is deterministic") {
  const auto a = ReferenceModel::init(7, small_dims());
  const auto b = ReferenceModel::init(7, small_dims());
  const auto c = ReferenceModel::init(8, small_dims());
  CHECK(a.checksum() == b.checksum());
  CHECK(a.checksum() != c.checksum());
  CHECK(a.model_id() == b.model_id());
  CHECK(a.pad_embedding().isZero(0.0));
}

TEST_CASE("dims outside the supported range") {
  ModelDims d;
  d.vocab = 3;
  CHECK_THROWS_AS(ReferenceModel::init(0, d), Error);
  d = ModelDims{};
  d.dim = 1;
  CHECK_THROWS_AS(ReferenceModel::init(0, d), Error);
}

TEST_CASE("zeroed model is uniform") {
  const auto m = ReferenceModel::zeroed(small_dims());
  const auto seq = ids({1, 40, 41, 42, 43});
  const Matrix lp = m.next_token_log_probs(seq);
  const double lnv = std::log(260.0);
  for (Eigen::Index r = 0; r < lp.rows(); ++r) {
    for (Eigen::Index c = 0; c < lp.cols(); ++c) CHECK(lp(r, c) == doctest::Approx(-lnv).epsilon(1e-15));
  }
  // Three target tokens: exactly 3 * -ln V.
  const double f = m.score_target(ids({1, 40, 41}), ids({50, 51, 52}));
  CHECK(std::abs(f - 3.0 * -lnv) <= 1e-12);
  const Matrix g = m.grad_wrt_embeddings(ids({1, 40, 41}), ids({50}), m.embed_sequence(ids({1, 40, 41})));
  CHECK(g.isZero(0.0));
  CHECK(fd_check(m, 3, 1e-3) == 0.0);
}

TEST_CASE("score_target basics") {
  const auto m = ReferenceModel::init(1, small_dims());
  CHECK(m.score_target(ids({1, 40}), {}) == 0.0);
  const double a = m.score_target(ids({1, 40, 41}), ids({60, 61}));
  const double b = m.score_target(ids({1, 40, 41}), ids({60, 61}));
  CHECK(a == b);
  CHECK(a < 0.0);
  // Overriding with the model's own embeddings changes nothing.
  const Matrix x = m.embed_sequence(ids({1, 40, 41}));
  CHECK(m.score_target(ids({1, 40, 41}), ids({60, 61}), &x) == a);
}

TEST_CASE("capacity and shape errors") {
  const auto m = ReferenceModel::init(1, small_dims());
  std::vector<TokenId> longctx(64, 40);
  try {
    (void)m.score_target(longctx, ids({41}));
    FAIL("expected capacity error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::capacity);
  }
  const Matrix wrong = Matrix::Zero(2, 8);
  CHECK_THROWS_AS((void)m.score_target(ids({1, 40, 41}), ids({42}), &wrong), Error);
}

TEST_CASE("gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = ReferenceModel::init(seed, small_dims());
    CHECK(fd_check(m, seed + 100, 1e-3) <= 1e-4);
  }
  const LinearHook lin(2, 5);
  CHECK(fd_check(lin, 1, 1e-3) <= 1e-8);
}

TEST_CASE("duplicated tokens get per-position gradients") {
  const auto m = ReferenceModel::init(4, small_dims());
  const auto ctx = ids({1, 50, 50, 50});
  const Matrix g = m.grad_wrt_embeddings(ctx, ids({60}), m.embed_sequence(ctx));
  REQUIRE(g.rows() == 4);
  CHECK((g.row(1) - g.row(3)).norm() > 1e-9);
}

TEST_CASE("sampling") {
  const auto m = ReferenceModel::init(5, small_dims());
  const auto ctx = ids({1, 40, 41});
  SamplingConfig cfg;
  cfg.max_new_tokens = 6;
  cfg.seed = 11;
  SUBCASE("fixed seed reproduces") {
    CHECK(sample_answers(m, ctx, cfg, 4) == sample_answers(m, ctx, cfg, 4));
    const auto s = sample_answers(m, ctx, cfg, 4);
    CHECK(s.size() == 4);
    for (const auto& x : s) CHECK(x.size() <= 6);
  }
  SUBCASE("greedy samples agree") {
    cfg.greedy = true;
    const auto s = sample_answers(m, ctx, cfg, 5);
    for (const auto& x : s) CHECK(x == s[0]);
  }
  SUBCASE("zeroed model draws uniformly") {
    const auto z = ReferenceModel::zeroed(small_dims());
    cfg.max_new_tokens = 1;
    const std::size_t n = 10000;
    const auto s = sample_answers(z, ctx, cfg, n);
    std::map<TokenId, std::size_t> counts;
    for (const auto& x : s) {
      REQUIRE(x.size() <= 1);
      // eos ends a sample early; it still counts as a draw.
      counts[x.empty() ? special::eos : x[0]]++;
    }
    const double p = 1.0 / 260.0;
    const double sigma = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
    for (TokenId t = 0; t < 260; ++t) {
      const double c = static_cast<double>(counts[t]);
      CHECK(std::abs(c - static_cast<double>(n) * p) <= 5.0 * sigma);
    }
  }
  SUBCASE("invalid config") {
    cfg.top_p = 0.0;
    CHECK_THROWS_AS(sample_answers(m, ctx, cfg, 1), Error);
  }
}

TEST_CASE("peaked model has near-zero entropy") {
  const auto m = ReferenceModel::peaked(small_dims(), 77, 60.0);
  const Matrix lp = m.next_token_log_probs(ids({1, 40}));
  CHECK(entropy_of(lp.row(0)) < 1e-20);
  SamplingConfig cfg;
  cfg.max_new_tokens = 3;
  for (const auto& s : sample_answers(m, ids({1}), cfg, 3)) CHECK(s == ids({77, 77, 77}));
}

TEST_CASE("training lowers the loss and is reproducible") {
  std::vector<std::vector<TokenId>> seqs = {ids({1, 10, 11, 12, 13, 14, 2}), ids({1, 10, 11, 12, 13, 15, 2})};
  auto a = ReferenceModel::init(3, small_dims());
  auto b = ReferenceModel::init(3, small_dims());
  TrainConfig tc;
  tc.steps = 200;
  tc.learning_rate = 1e-2;
  const auto la = train(a, seqs, tc);
  const auto lb = train(b, seqs, tc);
  CHECK(la == lb);
  CHECK(a.checksum() == b.checksum());
  CHECK(la.back() < 0.5 * la.front());
  CHECK(a.pad_embedding().isZero(0.0));
  CHECK(a.model_id().find("+lm(") != std::string::npos);
}

TEST_CASE("layout places answer after the forcing frame") {
  const auto m = ReferenceModel::init(1, ModelDims{});
  ReasoningTrace t;
  t.trace_id = "x";
  t.query = "ab";
  t.cot = "cde";
  t.answer = "7";
  t.tokens = m.tokenizer().tokenize(t.cot);
  t.answer_tokens = m.tokenizer().tokenize(t.answer);
  const auto l = layout_trace(m, t);
  CHECK(l.ids.front() == special::bos);
  CHECK(l.query_begin == 1);
  CHECK(l.cot_begin == 3);
  CHECK(l.cot_end == 6);
  CHECK(l.ids[l.cot_end] == special::answer_marker);
  CHECK(l.answer_begin == 6 + 1 + 13);
  CHECK(l.target().size() == 1);
  CHECK(l.target()[0] == m.tokenizer().byte_id('7'));
}
