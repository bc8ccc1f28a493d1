#include "cotig/synthetic.hpp"

#include <array>

#include <fmt/format.h>

#include "cotig/error.hpp"
#include "cotig/random.hpp"

namespace cotig {

std::string_view to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::step: return "step";
    case SegmentKind::repeat: return "repeat";
    case SegmentKind::truncation: return "truncation";
    case SegmentKind::filler: return "filler";
  }
  return "step";
}

namespace {

struct Op {
  char sym;
  long operand;
};

constexpr std::array<std::string_view, 4> kStepOpeners = {"\n\nWait, ", "\n\nHowever, ", "\n\nAnother step: ",
                                                           "\n\nGoing back to the chain, "};

constexpr std::array<std::string_view, 5> kFillers = {
    "\n\nHowever, to be clear, each operation applies to the running total.",
    "\n\nNot sure the order matters here, but the steps go left to right.",
    "\n\nAlternatively, one could write everything as one expression, but step by step is clearer.",
    "\n\nWait, I should keep the running total in mind at every step.",
    "\n\nHowever, nothing tricky is happening, only whole numbers.",
};

std::string_view verb(char sym) {
  switch (sym) {
    case '+': return "add";
    case '-': return "subtract";
    default: return "multiply by";
  }
}

long apply(long acc, const Op& op) {
  switch (op.sym) {
    case '+': return acc + op.operand;
    case '-': return acc - op.operand;
    default: return acc * op.operand;
  }
}

ReasoningTrace finish(std::string id, std::string query, std::string answer, const std::vector<std::string>& parts,
                      const ByteTokenizer& tokenizer, const KeywordSet& keywords) {
  ReasoningTrace t;
  t.trace_id = std::move(id);
  t.query = std::move(query);
  t.answer = std::move(answer);
  for (const auto& p : parts) t.cot += p;
  t.tokens = tokenizer.tokenize(t.cot);
  t.answer_tokens = tokenizer.tokenize(t.answer);
  segment_trace(t, keywords);
  return t;
}

}  // namespace

std::vector<SyntheticTrace> generate_synthetic(const SyntheticConfig& cfg, const ByteTokenizer& tokenizer) {
  if (cfg.min_ops < 2 || cfg.max_ops < cfg.min_ops) {
    throw Error(ErrorKind::config, "synthetic corpus needs 2 <= min_ops <= max_ops");
  }
  const KeywordSet keywords = default_keywords("paper-main");
  Rng rng(cfg.seed);
  std::vector<SyntheticTrace> out;
  out.reserve(cfg.traces);

  while (out.size() < cfg.traces) {
    const std::size_t n = out.size();
    const long start = 2 + static_cast<long>(rng.below(48));
    const std::size_t n_ops = cfg.min_ops + rng.below(cfg.max_ops - cfg.min_ops + 1);
    std::vector<Op> ops;
    for (std::size_t i = 0; i < n_ops; ++i) {
      const auto kind = rng.below(3);
      if (kind == 0) ops.push_back({'+', 1 + static_cast<long>(rng.below(30))});
      else if (kind == 1) ops.push_back({'-', 1 + static_cast<long>(rng.below(20))});
      else ops.push_back({'*', 2 + static_cast<long>(rng.below(4))});
    }

    std::string query = fmt::format("Start with {}", start);
    for (const auto& op : ops) query += fmt::format(", {} {}", verb(op.sym), op.operand);
    query += ". Result?";

    // Genuine steps: one per operation, then a concluding segment.
    std::vector<std::string> steps;
    long acc = start;
    for (std::size_t i = 0; i < ops.size(); ++i) {
      const long next = apply(acc, ops[i]);
      const std::string body = fmt::format("{} {} {} = {}.", acc, ops[i].sym, ops[i].operand, next);
      if (i == 0) {
        steps.push_back(fmt::format("We start from {}. First, {}", start, body));
      } else {
        steps.push_back(fmt::format("{}{}", kStepOpeners[rng.below(kStepOpeners.size())], body));
      }
      acc = next;
    }
    steps.push_back(fmt::format("\n\nAnother look confirms the chain, so the result is {}.", acc));
    const std::string answer = std::to_string(acc);

    // Injections go strictly between genuine steps, never before the first or after the last.
    std::vector<std::string> parts;
    std::vector<SegmentKind> kinds;
    std::vector<std::size_t> origin;  // genuine step index for steps/repeats
    for (std::size_t i = 0; i < steps.size(); ++i) {
      parts.push_back(steps[i]);
      kinds.push_back(SegmentKind::step);
      origin.push_back(i);
    }

    auto insert_at = [&](std::size_t pos, std::string text, SegmentKind kind, std::size_t src) {
      parts.insert(parts.begin() + static_cast<std::ptrdiff_t>(pos), std::move(text));
      kinds.insert(kinds.begin() + static_cast<std::ptrdiff_t>(pos), kind);
      origin.insert(origin.begin() + static_cast<std::ptrdiff_t>(pos), src);
    };

    if (rng.uniform() < cfg.repeat_rate) {
      // Copy a non-first genuine step; place the copy after it, before the conclusion.
      const std::size_t src = 1 + rng.below(ops.size() - 1);
      const std::size_t lo = src + 1;
      const std::size_t hi = parts.size() - 1;
      insert_at(lo + rng.below(hi - lo + 1), steps[src], SegmentKind::repeat, src);
    }
    if (rng.uniform() < cfg.truncation_rate) {
      const std::size_t i = rng.below(ops.size());
      long before = start;
      for (std::size_t k = 0; k < i; ++k) before = apply(before, ops[k]);
      const std::string text = fmt::format("\n\nAlternatively, maybe {} {} {} could be done another way, since",
                                           before, ops[i].sym, ops[i].operand);
      insert_at(1 + rng.below(parts.size() - 1), text, SegmentKind::truncation, 0);
    }
    if (rng.uniform() < cfg.filler_rate) {
      insert_at(1 + rng.below(parts.size() - 1), std::string(kFillers[rng.below(kFillers.size())]),
                SegmentKind::filler, 0);
    }

    SyntheticTrace st;
    const std::string id = fmt::format("synth-{:04d}", n);
    st.trace = finish(id, query, answer, parts, tokenizer, keywords);
    st.clean = finish(id, query, answer, steps, tokenizer, keywords);
    // Redraw chains whose training sequence would not fit the context:
    // bos, query, cot, marker, forcing text, answer, eos.
    const std::size_t sequence = st.trace.query.size() + st.trace.cot.size() + st.trace.answer.size() +
                                 std::string_view("final answer:").size() + 3;
    if (sequence > cfg.max_sequence) continue;
    if (st.trace.segment_count() != parts.size() || st.clean.segment_count() != steps.size()) {
      throw Error(ErrorKind::alignment, fmt::format("{}: generated parts do not segment one-to-one", id));
    }
    st.kinds = kinds;
    // Map genuine-step origins to segment indices in the injected trace.
    std::vector<std::size_t> where(steps.size(), 0);
    for (std::size_t m = 0; m < parts.size(); ++m) {
      if (kinds[m] == SegmentKind::step) where[origin[m]] = m;
    }
    st.source.resize(parts.size());
    for (std::size_t m = 0; m < parts.size(); ++m) {
      st.source[m] = kinds[m] == SegmentKind::repeat ? where[origin[m]] : m;
    }
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace cotig
