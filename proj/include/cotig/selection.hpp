#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cotig/scoring.hpp"
#include "cotig/trace.hpp"

namespace cotig {

struct SelectionPolicy {
  double tau = 0.7;
  double beta = 0.8;
  bool include_boundaries = true;

  void validate() const;
};

struct SelectionResult {
  std::vector<std::size_t> ranking;
  std::size_t k_star = 0;
  std::set<std::size_t> important;
  SelectionPolicy policy;
};

/// Ranks segments by normalized strength (descending, earlier index first on
/// ties), takes the shortest prefix whose cumulative normalized strength
/// reaches tau (the whole ranking if rounding keeps it below), keeps the
/// prefix members whose consistency is <= beta, then adds the first and last
/// segments when include_boundaries is set.
SelectionResult select_important(std::span<const SegmentScore> scores, std::span<const Segment> segments,
                                 const SelectionPolicy& policy);

/// Adds the is_first / is_last segments to `important`.
void add_boundaries(std::set<std::size_t>& important, std::span<const Segment> segments);

/// One selection line: {trace_id, method, ranking, k_star, important, policy}.
/// `ranking`/`k_star`/`policy` are omitted for methods that do not produce them.
struct SelectionRecord {
  std::string trace_id;
  std::string method = "ig";
  std::vector<std::size_t> ranking;
  std::size_t k_star = 0;
  std::set<std::size_t> important;
  nlohmann::json policy = nlohmann::json::object();

  friend bool operator==(const SelectionRecord&, const SelectionRecord&) = default;
};

SelectionRecord to_record(const std::string& trace_id, const SelectionResult& result);
void write_selections(std::ostream& out, const std::vector<SelectionRecord>& records);
std::vector<SelectionRecord> read_selections(std::istream& in);

}  // namespace cotig
