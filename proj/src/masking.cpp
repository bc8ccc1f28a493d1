#include "cotig/masking.hpp"

#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "json.hpp"

#include "cotig/error.hpp"

namespace cotig {

using nlohmann::json;

std::size_t LossMask::covered() const {
  std::size_t n = 0;
  for (const auto& [s, e] : ones) n += e - s;
  return n;
}

double LossMask::coverage_ratio() const {
  return length == 0 ? 0.0 : static_cast<double>(covered()) / static_cast<double>(length);
}

std::vector<std::uint8_t> LossMask::to_bits() const {
  std::vector<std::uint8_t> bits(length, 0);
  for (const auto& [s, e] : ones) {
    for (std::size_t t = s; t < e && t < length; ++t) bits[t] = 1;
  }
  return bits;
}

void LossMask::validate() const {
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < ones.size(); ++i) {
    const auto& [s, e] = ones[i];
    if (e <= s) throw Error(ErrorKind::format, fmt::format("mask '{}': empty range [{}, {})", trace_id, s, e));
    if (e > length) throw Error(ErrorKind::format, fmt::format("mask '{}': range [{}, {}) past length {}", trace_id, s, e, length));
    if (i > 0 && s < prev_end) {
      throw Error(ErrorKind::format, fmt::format("mask '{}': range [{}, {}) overlaps or precedes [.., {})", trace_id, s, e, prev_end));
    }
    prev_end = e;
  }
}

LossMask LossMask::from_bits(std::string trace_id, const std::vector<std::uint8_t>& bits) {
  LossMask m;
  m.trace_id = std::move(trace_id);
  m.length = bits.size();
  for (std::size_t t = 0; t < bits.size(); ++t) {
    if (bits[t] == 0) continue;
    if (!m.ones.empty() && m.ones.back().second == t) {
      ++m.ones.back().second;
    } else {
      m.ones.emplace_back(t, t + 1);
    }
  }
  return m;
}

std::size_t mask_domain(const ReasoningTrace& trace) { return trace.token_count() + trace.answer_tokens.size(); }

LossMask build_loss_mask(const ReasoningTrace& trace, const std::set<std::size_t>& important, bool answer_always_on) {
  std::vector<std::uint8_t> bits(mask_domain(trace), 0);
  for (std::size_t m : important) {
    if (m >= trace.segment_count()) {
      throw Error(ErrorKind::join, fmt::format("trace '{}': selected segment {} but the trace has {}", trace.trace_id,
                                               m, trace.segment_count()));
    }
    const auto& seg = trace.segments[m];
    for (std::size_t t = seg.first; t <= seg.last; ++t) bits[t] = 1;
  }
  if (answer_always_on) {
    for (std::size_t t = trace.token_count(); t < bits.size(); ++t) bits[t] = 1;
  }
  return LossMask::from_bits(trace.trace_id, bits);
}

LossMask build_loss_mask(const ReasoningTrace& trace, const SelectionResult& sel, bool answer_always_on) {
  return build_loss_mask(trace, sel.important, answer_always_on);
}

double compute_loss(const GradOracle& oracle, const ReasoningTrace& trace, const LossMask* mask,
                    const PromptLayout& prompt) {
  const SequenceLayout layout = layout_trace(oracle, trace, prompt);
  const std::size_t domain = mask_domain(trace);
  if (mask != nullptr) {
    if (mask->length != domain) {
      throw Error(ErrorKind::join, fmt::format("mask '{}' has length {} but the trace target has {} tokens",
                                               mask->trace_id, mask->length, domain));
    }
    mask->validate();
  }
  const Matrix logp = oracle.next_token_log_probs(layout.ids);
  const std::size_t cot_tokens = trace.token_count();
  auto nll = [&](std::size_t t) {
    const std::size_t pos = t < cot_tokens ? layout.cot_begin + t : layout.answer_begin + (t - cot_tokens);
    return -logp(static_cast<Eigen::Index>(pos - 1), layout.ids[pos]);
  };

  double total = 0.0;
  std::size_t count = 0;
  if (mask == nullptr) {
    for (std::size_t t = 0; t < domain; ++t) total += nll(t);
    count = domain;
  } else {
    for (const auto& [s, e] : mask->ones) {
      for (std::size_t t = s; t < e; ++t) total += nll(t);
      count += e - s;
    }
  }
  if (count == 0) {
    throw Error(ErrorKind::empty_support, fmt::format("trace '{}': loss mask selects no tokens", trace.trace_id));
  }
  return total / static_cast<double>(count);
}

void write_masks(std::ostream& out, const std::vector<LossMask>& masks) {
  for (const auto& m : masks) {
    json ones = json::array();
    for (const auto& [s, e] : m.ones) ones.push_back({s, e});
    out << json{{"trace_id", m.trace_id}, {"length", m.length}, {"ones", std::move(ones)}}.dump() << '\n';
  }
}

std::vector<LossMask> read_masks(std::istream& in) {
  std::vector<LossMask> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    LossMask m;
    try {
      const json j = json::parse(line);
      m.trace_id = j.at("trace_id").get<std::string>();
      m.length = j.at("length").get<std::size_t>();
      for (const auto& r : j.at("ones")) {
        if (!r.is_array() || r.size() != 2) throw Error(ErrorKind::format, "ones entries must be [start, end) pairs");
        m.ones.emplace_back(r[0].get<std::size_t>(), r[1].get<std::size_t>());
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::format, fmt::format("mask line {}: {}", line_no, e.what()));
    }
    m.validate();
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace cotig
