#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cotig/oracle.hpp"

namespace cotig {

/// Client for an external chat-completions service that labels a middle
/// segment as truncated (an unfinished thought) given its neighbours.
struct JudgeConfig {
  /// http://host[:port]/path
  std::string endpoint;
  std::string model = "judge";
  SamplingConfig round1{0.2, 0.7, 2000, 0, 1.1, false};
  SamplingConfig round2{0.1, 0.7, 1000, 0, 1.1, false};
  std::size_t transport_retries = 3;
  std::chrono::milliseconds backoff{500};
  std::chrono::seconds timeout{300};
  /// Sent as a bearer token when non-empty. Defaults to $COTIG_JUDGE_API_KEY.
  std::string api_key;
  std::size_t max_in_flight = 4;

  static JudgeConfig from_env(std::string endpoint);
};

inline constexpr std::string_view kJudgePromptVersion = "truncation-judge/v1";

std::string_view truncation_prompt_template();
std::string_view early_stopping_prompt();
/// The template with the three segments substituted.
std::string render_truncation_prompt(std::string_view prev, std::string_view mid, std::string_view next);

/// Verdict from the last \boxed{0} or \boxed{1} in `text`.
std::optional<bool> parse_boxed_verdict(std::string_view text);

/// Request body {model, messages, temperature, top_p, max_tokens, repetition_penalty}.
nlohmann::json make_judge_request(const JudgeConfig& cfg, const nlohmann::json& messages, const SamplingConfig& s);

/// Text of a chat-completions response: choices[0].message.content,
/// choices[0].text, or a top-level "text"/"content" string.
std::string extract_completion_text(const nlohmann::json& response);

/// One request/response exchange; implementations report failures as Error(transport).
class JudgeTransport {
 public:
  virtual ~JudgeTransport() = default;
  virtual nlohmann::json post(const nlohmann::json& request) = 0;
};

/// HTTP POST with `transport_retries` retries and exponential backoff on
/// connection failures and 5xx statuses.
class HttpJudgeTransport final : public JudgeTransport {
 public:
  explicit HttpJudgeTransport(JudgeConfig cfg);
  nlohmann::json post(const nlohmann::json& request) override;

 private:
  JudgeConfig cfg_;
  std::string host_;
  std::string path_;
};

struct JudgeVerdict {
  bool truncated = false;
  int rounds = 1;
};

/// Round 1 sends the rendered prompt. If no boxed digit comes back, round 2
/// re-sends the prompt with the round-1 output plus the early-stopping prompt
/// as the assistant turn. Throws Error(judge_undecided) when round 2 is also
/// unparseable.
JudgeVerdict judge_truncation(JudgeTransport& transport, const JudgeConfig& cfg, std::string_view prev,
                              std::string_view mid, std::string_view next);
JudgeVerdict judge_truncation(const JudgeConfig& cfg, std::string_view prev, std::string_view mid,
                              std::string_view next);

struct JudgeJob {
  std::string prev, mid, next;
};

/// Runs jobs over HTTP with at most cfg.max_in_flight concurrent requests.
/// Results are in job order; a job that fails leaves std::nullopt and its error message.
struct JudgeOutcome {
  std::optional<JudgeVerdict> verdict;
  std::string error;
};
std::vector<JudgeOutcome> judge_many(const JudgeConfig& cfg, const std::vector<JudgeJob>& jobs);

}  // namespace cotig
