#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cotig/oracle.hpp"
#include "cotig/selection.hpp"
#include "cotig/trace.hpp"

namespace cotig {

using TokenRange = std::pair<std::size_t, std::size_t>;  // [first, end)

/// Per-token 0/1 loss indicator over the training target: the cot tokens
/// followed by the answer tokens. Stored as maximal runs of ones.
struct LossMask {
  std::string trace_id;
  std::size_t length = 0;
  std::vector<TokenRange> ones;

  [[nodiscard]] std::size_t covered() const;
  [[nodiscard]] double coverage_ratio() const;
  [[nodiscard]] std::vector<std::uint8_t> to_bits() const;
  /// Throws Error(format) unless ranges are non-empty, sorted, disjoint and inside [0, length).
  void validate() const;

  static LossMask from_bits(std::string trace_id, const std::vector<std::uint8_t>& bits);
  friend bool operator==(const LossMask&, const LossMask&) = default;
};

/// Number of mask positions for a trace: cot tokens + answer tokens.
std::size_t mask_domain(const ReasoningTrace& trace);

/// I(o_t) = 1 iff token t lies in an important segment; answer tokens are on
/// when `answer_always_on`. Throws Error(join) on segment ids outside the trace.
LossMask build_loss_mask(const ReasoningTrace& trace, const std::set<std::size_t>& important,
                         bool answer_always_on = true);
LossMask build_loss_mask(const ReasoningTrace& trace, const SelectionResult& sel, bool answer_always_on = true);

/// Mean next-token NLL over the mask domain (no mask) or over the masked
/// tokens only. Both paths sum in ascending token order, so an all-ones mask
/// reproduces the unmasked value exactly. Throws Error(empty_support) for a
/// mask with no ones.
double compute_loss(const GradOracle& oracle, const ReasoningTrace& trace, const LossMask* mask = nullptr,
                    const PromptLayout& prompt = {});

void write_masks(std::ostream& out, const std::vector<LossMask>& masks);
std::vector<LossMask> read_masks(std::istream& in);

}  // namespace cotig
