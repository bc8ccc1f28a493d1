#include "cotig/selection.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>

#include <fmt/format.h>

#include "cotig/error.hpp"

namespace cotig {

using nlohmann::json;

void SelectionPolicy::validate() const {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorKind::config, fmt::format("tau {} outside (0, 1]", tau));
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorKind::config, fmt::format("beta {} outside [0, 1]", beta));
}

SelectionResult select_important(std::span<const SegmentScore> scores, std::span<const Segment> segments,
                                 const SelectionPolicy& policy) {
  policy.validate();
  if (scores.empty()) throw Error(ErrorKind::domain, "selection needs at least one segment score");
  if (scores.size() != segments.size()) {
    throw Error(ErrorKind::join, fmt::format("{} scores for {} segments", scores.size(), segments.size()));
  }
  SelectionResult r;
  r.policy = policy;
  r.ranking.resize(scores.size());
  std::iota(r.ranking.begin(), r.ranking.end(), std::size_t{0});
  std::stable_sort(r.ranking.begin(), r.ranking.end(), [&](std::size_t a, std::size_t b) {
    return scores[a].normalized_strength > scores[b].normalized_strength;
  });

  r.k_star = scores.size();
  double cumulative = 0.0;
  for (std::size_t k = 0; k < r.ranking.size(); ++k) {
    cumulative += scores[r.ranking[k]].normalized_strength;
    if (cumulative >= policy.tau) {
      r.k_star = k + 1;
      break;
    }
  }
  for (std::size_t k = 0; k < r.k_star; ++k) {
    const std::size_t m = r.ranking[k];
    if (scores[m].consistency <= policy.beta) r.important.insert(m);
  }
  if (policy.include_boundaries) add_boundaries(r.important, segments);
  return r;
}

void add_boundaries(std::set<std::size_t>& important, std::span<const Segment> segments) {
  for (const auto& s : segments) {
    if (s.is_first || s.is_last) important.insert(s.seg_index);
  }
}

SelectionRecord to_record(const std::string& trace_id, const SelectionResult& result) {
  SelectionRecord rec;
  rec.trace_id = trace_id;
  rec.ranking = result.ranking;
  rec.k_star = result.k_star;
  rec.important = result.important;
  rec.policy = {{"tau", result.policy.tau},
                {"beta", result.policy.beta},
                {"include_boundaries", result.policy.include_boundaries}};
  return rec;
}

void write_selections(std::ostream& out, const std::vector<SelectionRecord>& records) {
  for (const auto& r : records) {
    json j = {{"trace_id", r.trace_id}, {"method", r.method}, {"important", r.important}};
    if (!r.ranking.empty()) {
      j["ranking"] = r.ranking;
      j["k_star"] = r.k_star;
    }
    if (!r.policy.empty()) j["policy"] = r.policy;
    out << j.dump() << '\n';
  }
}

std::vector<SelectionRecord> read_selections(std::istream& in) {
  std::vector<SelectionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      SelectionRecord r;
      r.trace_id = j.at("trace_id").get<std::string>();
      r.method = j.value("method", std::string("ig"));
      r.important = j.at("important").get<std::set<std::size_t>>();
      if (j.contains("ranking")) {
        r.ranking = j["ranking"].get<std::vector<std::size_t>>();
        r.k_star = j.at("k_star").get<std::size_t>();
      }
      if (j.contains("policy")) r.policy = j["policy"];
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::format, fmt::format("selection line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

}  // namespace cotig
