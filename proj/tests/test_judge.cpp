#include <atomic>
#include <deque>
#include <mutex>
#include <thread>

#include "doctest.h"

#include "cotig/error.hpp"
#include "cotig/judge.hpp"
// After Eigen: resolv.h defines a _res macro that collides with Eigen parameter names.
#include "httplib.h"

using namespace cotig;
using nlohmann::json;

namespace {

/// Local chat-completions stand-in that replays scripted (status, content) pairs.
class MockJudge {
 public:
  MockJudge() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      requests.push_back(json::parse(req.body));
      auth.push_back(req.get_header_value("Authorization"));
      auto [status, content] = script.empty() ? std::pair{200, std::string("\\boxed{0}")} : script.front();
      if (!script.empty()) script.pop_front();
      res.status = status;
      json body = {{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
      res.set_content(body.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockJudge() {
    server_.stop();
    thread_.join();
  }

  JudgeConfig config() const {
    JudgeConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    cfg.backoff = std::chrono::milliseconds(1);
    cfg.timeout = std::chrono::seconds(10);
    return cfg;
  }

  std::deque<std::pair<int, std::string>> script;
  std::vector<json> requests;
  std::vector<std::string> auth;

 private:
  httplib::Server server_;
  std::thread thread_;
  std::mutex mu_;
  int port_ = 0;
};

}  // namespace

TEST_CASE("boxed verdict parsing") {
  CHECK(parse_boxed_verdict("My final answer is:\n\n$$\n\\boxed{1}\n$$") == true);
  CHECK(parse_boxed_verdict("\\boxed{ 0 }") == false);
  CHECK(parse_boxed_verdict("\\boxed{1} then \\boxed{0}") == false);
  CHECK(parse_boxed_verdict("\\boxed{1 or 0}") == std::nullopt);
  CHECK(parse_boxed_verdict("\\boxed{2}") == std::nullopt);
  CHECK(parse_boxed_verdict("no verdict") == std::nullopt);
}

TEST_CASE("prompt template") {
  const auto tpl = truncation_prompt_template();
  CHECK(tpl.starts_with("I will provide you with 3 segments of text"));
  CHECK(tpl.ends_with("- You must not explain anything more after giving the final answer."));
  CHECK(tpl.find("My final answer is:\n\n$$\n\\boxed{1 or 0}\n$$") != std::string_view::npos);
  CHECK(tpl.find("continuous by a reasoning model") == std::string_view::npos);
  const auto r = render_truncation_prompt("first {SEGMENT 2}", "second", "third");
  CHECK(r.find("Segment 1:\n\n> first {SEGMENT 2}\n\nSegment 2:\n\n> second\n\nSegment 3:\n\n> third\n") !=
        std::string::npos);
  CHECK(early_stopping_prompt().starts_with("\n\n Considering the limited time"));
  CHECK(early_stopping_prompt().ends_with("</think>\n\n My final answer is:\n\n"));
}

TEST_CASE("request shape and text extraction") {
  JudgeConfig cfg;
  const auto req = make_judge_request(cfg, json::array(), cfg.round1);
  CHECK(req["temperature"] == 0.2);
  CHECK(req["top_p"] == 0.7);
  CHECK(req["max_tokens"] == 2000);
  CHECK(req["repetition_penalty"] == 1.1);
  CHECK(extract_completion_text(json{{"choices", {{{"text", "a"}}}}}) == "a");
  CHECK(extract_completion_text(json{{"content", "b"}}) == "b");
  CHECK_THROWS_AS(extract_completion_text(json{{"x", 1}}), Error);
}

TEST_CASE("single round verdict over http") {
  MockJudge mock;
  mock.script = {{200, "reasoning...\n\\boxed{1}"}};
  auto cfg = mock.config();
  cfg.api_key = "secret";
  const auto v = judge_truncation(cfg, "a", "b", "c");
  CHECK(v.truncated);
  CHECK(v.rounds == 1);
  REQUIRE(mock.requests.size() == 1);
  CHECK(mock.auth[0] == "Bearer secret");
  CHECK(mock.requests[0]["messages"].size() == 1);
  CHECK(mock.requests[0]["messages"][0]["content"] == render_truncation_prompt("a", "b", "c"));
}

TEST_CASE("second round with the early-stopping prompt") {
  MockJudge mock;
  mock.script = {{200, "thinking without end"}, {200, "\\boxed{0}"}};
  const auto v = judge_truncation(mock.config(), "a", "b", "c");
  CHECK_FALSE(v.truncated);
  CHECK(v.rounds == 2);
  REQUIRE(mock.requests.size() == 2);
  const auto& second = mock.requests[1];
  CHECK(second["max_tokens"] == 1000);
  CHECK(second["temperature"] == 0.1);
  REQUIRE(second["messages"].size() == 2);
  CHECK(second["messages"][1]["role"] == "assistant");
  CHECK(second["messages"][1]["content"] == "thinking without end" + std::string(early_stopping_prompt()));
}

TEST_CASE("undecided after two rounds") {
  MockJudge mock;
  mock.script = {{200, "hmm"}, {200, "still hmm"}};
  try {
    judge_truncation(mock.config(), "a", "b", "c");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::judge_undecided);
  }
}

TEST_CASE("server errors are retried, client errors are not") {
  MockJudge mock;
  mock.script = {{503, ""}, {500, ""}, {200, "\\boxed{1}"}};
  CHECK(judge_truncation(mock.config(), "a", "b", "c").truncated);
  CHECK(mock.requests.size() == 3);

  MockJudge failing;
  failing.script = {{400, ""}};
  try {
    judge_truncation(failing.config(), "a", "b", "c");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::transport);
  }
  CHECK(failing.requests.size() == 1);

  MockJudge down;
  down.script = {{502, ""}, {502, ""}, {502, ""}, {502, ""}, {200, "\\boxed{1}"}};
  CHECK_THROWS_AS(judge_truncation(down.config(), "a", "b", "c"), Error);
  CHECK(down.requests.size() == 4);
}

TEST_CASE("endpoint validation") {
  JudgeConfig cfg;
  cfg.endpoint = "https://example.com/v1";
  CHECK_THROWS_AS(HttpJudgeTransport{cfg}, Error);
  cfg.endpoint = "http:///path";
  CHECK_THROWS_AS(HttpJudgeTransport{cfg}, Error);
}

TEST_CASE("many jobs keep their order") {
  MockJudge mock;
  auto cfg = mock.config();
  cfg.max_in_flight = 3;
  std::vector<JudgeJob> jobs(7, JudgeJob{"a", "b", "c"});
  const auto out = judge_many(cfg, jobs);
  REQUIRE(out.size() == 7);
  for (const auto& o : out) {
    REQUIRE(o.verdict);
    CHECK_FALSE(o.verdict->truncated);
  }
  CHECK(mock.requests.size() == 7);
}
