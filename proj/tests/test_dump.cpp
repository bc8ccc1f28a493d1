#include <sstream>

#include "doctest.h"

#include "cotig/dump.hpp"
#include "cotig/error.hpp"
#include "test_util.hpp"

using namespace cotig;

namespace {

ErrorKind read_kind(const std::string& text) {
  std::istringstream in(text);
  try {
    read_dump(in);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::io;
}

Dump sample_dump() {
  Dump d;
  d.header = make_header("m1", AttributionConfig{}, "paper-main");
  DumpRecord r;
  r.trace_id = "t";
  r.token_igs = {0.1, -0.25};
  r.completeness_gap = 1e-3;
  d.records.push_back(r);
  return d;
}

}  // namespace

TEST_CASE("header defaults") {
  const auto h = make_header("m", AttributionConfig{}, "paper-main");
  CHECK(h.steps == 50);
  CHECK(h.baseline == "pad");
  CHECK(h.attributed_region == "cot-only");
  CHECK(h.score_target == "sum-answer-logprob");
  CHECK(h.extra["forcing_text"] == "final answer:");
}

TEST_CASE("round trip is bit-exact") {
  Dump d = sample_dump();
  d.records[0].token_igs.push_back(1.0 / 3.0);
  d.records[0].token_igs.push_back(-2.5e-300);
  d.records[0].tokens = {{0, "ab", {0, 2}}};
  d.header.extra["producer"] = "adapter";
  std::ostringstream out;
  write_dump(out, d);
  std::istringstream in(out.str());
  const Dump back = read_dump(in);
  CHECK(back == d);
  CHECK(back.records[0].token_igs[0] == 0.1);
  CHECK(back.records[0].token_igs[1] == -0.25);
}

TEST_CASE("header with J=50 parses") {
  const auto text = R"({"kind":"header","format_version":1,"model_id":"x","baseline":"pad","steps":50,"keyword_profile":"paper-main"})"
                    "\n";
  std::istringstream in(text);
  CHECK(read_dump(in).header.steps == 50);
}

TEST_CASE("read errors") {
  CHECK(read_kind(R"({"kind":"header","format_version":99,"model_id":"x","baseline":"pad","steps":50,"keyword_profile":"k"})") ==
        ErrorKind::incompatible);
  CHECK(read_kind("") == ErrorKind::format);
  CHECK(read_kind(R"({"trace_id":"t","token_igs":[1]})") == ErrorKind::format);
  CHECK(read_kind("{oops") == ErrorKind::parse);
}

TEST_CASE("join matches records to traces") {
  const auto t = test::make_trace("t", "q", "ab", "1");
  const Dump d = sample_dump();
  const auto joined = join_dump({t}, d);
  REQUIRE(joined.size() == 1);
  CHECK(joined[0].igs == std::vector<double>{0.1, -0.25});

  auto kind_of_join = [](const std::vector<ReasoningTrace>& traces, const Dump& dump) {
    try {
      join_dump(traces, dump);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::io;
  };
  Dump unknown = d;
  unknown.records[0].trace_id = "zzz";
  CHECK(kind_of_join({t}, unknown) == ErrorKind::join);
  Dump short_igs = d;
  short_igs.records[0].token_igs = {0.5};
  CHECK(kind_of_join({t}, short_igs) == ErrorKind::join);
  const auto t2 = test::make_trace("other", "q", "cd", "1");
  CHECK(kind_of_join({t, t2}, d) == ErrorKind::join);
}
