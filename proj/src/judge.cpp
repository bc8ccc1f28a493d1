#include "cotig/judge.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "httplib.h"

#include "cotig/error.hpp"

namespace cotig {

using nlohmann::json;

namespace {

// Segment examples keep their line breaks escaped ("\n"), as they appear in raw traces.
constexpr std::string_view kTruncationPrompt =
    R"(I will provide you with 3 segments of text which are generated continuously by a reasoning model. Each segment itself represents a complete thinking step, and the 3 segments together represent 3 continuous thinking steps during the reasoning process.

Your task:

Taking Segment 1 and Segment 3 as context, determine whether Segment 2 is a "truncated" segment, i.e., an unfinished thinking step.

Example of a non-truncated segment:

> But let me double-check my calculations to be sure I didn’t make any mistakes.\n\nFirst, the original equation:\n\n√(1995) * x^(log_{1995} x) = x^2.\n\nI took log base 1995 of both sides, correctly applied the logarithm rules, and ended up with a quadratic in y = log_{1995} x. Solving that quadratic gave me two solutions, which translated back to x gave me two roots. Multiplying them gave me 1995², which is 3,980,025. So, yes, the last three digits are 025.

The above segment shows a complete thought process, because:
1. Internally, this segment has a clear logic, where calculations and reasoning are derived progressively.
2. It reaches a conclusion, which is the final answer to this reasoning step.
3. Externally, if given more context, this segment may continue or refute it's previous segment, and the next segment may also continue reasoning based on this segment, which forms a coherent reasoning chain.

Example of a truncated segment: 

> Wait, hold on a second. Let me verify if 1995² is indeed 3,980,025.\n\nCalculating 1995 * 1995:\n\nI can compute 2000 * 2000 = 4,000,000.\n\nThen, 2000 * (-5) = -10,000.\n\nSimilarly, (-5) * 2000 = -10,000.\n\nAnd (-5) * (-5) = 25.

The above segment is a truncated segment, because:
1. Internally, this segment lacks a clear logic, and it only shows partial calculations without reaching the final conclusion of 1995².
2. Externally, if given more context, this segment may abandon it's previous segment, and the next segment may also abandon this segment, which breaks the reasoning chain.

Now, based on the definitions and examples above, please judge whether Segment 2 is a truncated segment. Here are the given 3 segments:

Segment 1:

> {SEGMENT 1}

Segment 2:

> {SEGMENT 2}

Segment 3:

> {SEGMENT 3}

Please reason step by step, and answer "1" or "0" in the following format:

My final answer is:

$$
\boxed{1 or 0}
$$

NOTE:

- The final answer must be either "1" or "0", which means yes or no that Segment 2 is a truncated segment.

- The final answer must be in \boxed{} format.

- You must not explain anything more after giving the final answer.)";

constexpr std::string_view kEarlyStoppingPrompt =
    "\n\n Considering the limited time by the user, I have to immediately stop reasoning and give the answer (1 or 0) "
    "directly now.\n</think>\n\n My final answer is:\n\n";

}  // namespace

JudgeConfig JudgeConfig::from_env(std::string endpoint) {
  JudgeConfig cfg;
  cfg.endpoint = std::move(endpoint);
  if (const char* key = std::getenv("COTIG_JUDGE_API_KEY"); key != nullptr) cfg.api_key = key;
  return cfg;
}

std::string_view truncation_prompt_template() { return kTruncationPrompt; }
std::string_view early_stopping_prompt() { return kEarlyStoppingPrompt; }

std::string render_truncation_prompt(std::string_view prev, std::string_view mid, std::string_view next) {
  std::string out(kTruncationPrompt);
  // Last placeholder first: inserted text then only ever follows the
  // placeholders still to be found, so segment text is never rescanned.
  const auto put = [&](std::string_view key, std::string_view value) {
    const auto pos = out.find(key);
    if (pos != std::string::npos) out.replace(pos, key.size(), value);
  };
  put("{SEGMENT 3}", next);
  put("{SEGMENT 2}", mid);
  put("{SEGMENT 1}", prev);
  return out;
}

std::optional<bool> parse_boxed_verdict(std::string_view text) {
  constexpr std::string_view open = "\\boxed{";
  std::optional<bool> verdict;
  for (auto pos = text.find(open); pos != std::string_view::npos; pos = text.find(open, pos + 1)) {
    auto i = pos + open.size();
    while (i < text.size() && text[i] == ' ') ++i;
    if (i >= text.size() || (text[i] != '0' && text[i] != '1')) continue;
    const char digit = text[i++];
    while (i < text.size() && text[i] == ' ') ++i;
    if (i < text.size() && text[i] == '}') verdict = digit == '1';
  }
  return verdict;
}

json make_judge_request(const JudgeConfig& cfg, const json& messages, const SamplingConfig& s) {
  return {{"model", cfg.model},
          {"messages", messages},
          {"temperature", s.temperature},
          {"top_p", s.top_p},
          {"max_tokens", s.max_new_tokens},
          {"repetition_penalty", s.repetition_penalty}};
}

std::string extract_completion_text(const json& response) {
  if (response.contains("choices") && response["choices"].is_array() && !response["choices"].empty()) {
    const auto& c = response["choices"][0];
    if (c.contains("message") && c["message"].contains("content") && c["message"]["content"].is_string()) {
      return c["message"]["content"].get<std::string>();
    }
    if (c.contains("text") && c["text"].is_string()) return c["text"].get<std::string>();
  }
  for (const char* key : {"text", "content"}) {
    if (response.contains(key) && response[key].is_string()) return response[key].get<std::string>();
  }
  throw Error(ErrorKind::transport, "judge response carries no generated text");
}

HttpJudgeTransport::HttpJudgeTransport(JudgeConfig cfg) : cfg_(std::move(cfg)) {
  constexpr std::string_view scheme = "http://";
  std::string_view url = cfg_.endpoint;
  if (!url.starts_with(scheme)) {
    throw Error(ErrorKind::config, fmt::format("judge endpoint '{}' must be an http:// URL", cfg_.endpoint));
  }
  url.remove_prefix(scheme.size());
  const auto slash = url.find('/');
  host_ = std::string(url.substr(0, slash));
  path_ = slash == std::string_view::npos ? "/" : std::string(url.substr(slash));
  if (host_.empty()) throw Error(ErrorKind::config, fmt::format("judge endpoint '{}' has no host", cfg_.endpoint));
}

json HttpJudgeTransport::post(const json& request) {
  httplib::Client client("http://" + host_);
  client.set_connection_timeout(cfg_.timeout);
  client.set_read_timeout(cfg_.timeout);
  client.set_write_timeout(cfg_.timeout);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  const std::string body = request.dump();
  std::string last_error;
  auto delay = cfg_.backoff;
  for (std::size_t attempt = 0; attempt <= cfg_.transport_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = fmt::format("HTTP {}", res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorKind::transport, fmt::format("judge endpoint answered HTTP {}", res->status));
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::transport, fmt::format("judge response is not JSON: {}", e.what()));
    }
  }
  throw Error(ErrorKind::transport, fmt::format("judge endpoint unreachable after {} attempts: {}",
                                                cfg_.transport_retries + 1, last_error));
}

JudgeVerdict judge_truncation(JudgeTransport& transport, const JudgeConfig& cfg, std::string_view prev,
                              std::string_view mid, std::string_view next) {
  const std::string prompt = render_truncation_prompt(prev, mid, next);
  json messages = json::array({{{"role", "user"}, {"content", prompt}}});
  const std::string first = extract_completion_text(transport.post(make_judge_request(cfg, messages, cfg.round1)));
  if (auto v = parse_boxed_verdict(first)) return {*v, 1};

  messages.push_back({{"role", "assistant"}, {"content", first + std::string(kEarlyStoppingPrompt)}});
  const std::string second = extract_completion_text(transport.post(make_judge_request(cfg, messages, cfg.round2)));
  if (auto v = parse_boxed_verdict(second)) return {*v, 2};
  throw Error(ErrorKind::judge_undecided, "judge gave no boxed 0/1 verdict in two rounds");
}

JudgeVerdict judge_truncation(const JudgeConfig& cfg, std::string_view prev, std::string_view mid,
                              std::string_view next) {
  HttpJudgeTransport transport(cfg);
  return judge_truncation(transport, cfg, prev, mid, next);
}

std::vector<JudgeOutcome> judge_many(const JudgeConfig& cfg, const std::vector<JudgeJob>& jobs) {
  std::vector<JudgeOutcome> out(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    HttpJudgeTransport transport(cfg);
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        out[i].verdict = judge_truncation(transport, cfg, jobs[i].prev, jobs[i].mid, jobs[i].next);
      } catch (const Error& e) {
        out[i].error = e.what();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(cfg.max_in_flight, 1, std::max<std::size_t>(1, jobs.size()));
  std::vector<std::jthread> pool;
  for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  return out;
}

}  // namespace cotig
