#include "doctest.h"

#include "cotig/error.hpp"
#include "cotig/synthetic.hpp"

using namespace cotig;

TEST_CASE("labels line up with segments") {
  SyntheticConfig cfg;
  cfg.traces = 100;
  cfg.seed = 3;
  const auto corpus = generate_synthetic(cfg, ByteTokenizer());
  REQUIRE(corpus.size() == 100);
  std::size_t repeats = 0;
  for (const auto& s : corpus) {
    const auto m = s.trace.segment_count();
    REQUIRE(s.kinds.size() == m);
    REQUIRE(s.source.size() == m);
    CHECK(s.kinds.front() == SegmentKind::step);
    CHECK(s.kinds.back() == SegmentKind::step);
    CHECK(s.clean.query == s.trace.query);
    CHECK(s.clean.answer == s.trace.answer);
    std::size_t steps = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (s.kinds[i] == SegmentKind::step) ++steps;
      if (s.kinds[i] != SegmentKind::repeat) continue;
      ++repeats;
      const auto src = s.source[i];
      CHECK(src > 0);
      CHECK(src < i);
      CHECK(s.kinds[src] == SegmentKind::step);
      CHECK(s.trace.segment_text(i) == s.trace.segment_text(src));
    }
    CHECK(steps == s.clean.segment_count());
    CHECK(s.trace.cot.find(s.trace.answer) != std::string::npos);
  }
  CHECK(repeats > 70);
}

TEST_CASE("generation is seeded") {
  SyntheticConfig cfg;
  cfg.traces = 5;
  const auto a = generate_synthetic(cfg, ByteTokenizer());
  const auto b = generate_synthetic(cfg, ByteTokenizer());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].trace == b[i].trace);
  cfg.seed = 1;
  CHECK(generate_synthetic(cfg, ByteTokenizer())[0].trace.cot != a[0].trace.cot);
  cfg.min_ops = 1;
  CHECK_THROWS_AS(generate_synthetic(cfg, ByteTokenizer()), Error);
}

TEST_CASE("traces fit the sequence budget") {
  SyntheticConfig cfg;
  cfg.traces = 200;
  cfg.seed = 5;
  cfg.max_sequence = 400;
  for (const auto& s : generate_synthetic(cfg, ByteTokenizer())) {
    CHECK(s.trace.query.size() + s.trace.cot.size() + s.trace.answer.size() + 16 <= 400);
  }
}
