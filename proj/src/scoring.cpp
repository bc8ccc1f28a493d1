#include "cotig/scoring.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "cotig/error.hpp"

namespace cotig {

Aggregation parse_aggregation(std::string_view id) {
  if (id == "sqrt-normalized-sum" || id == "sqrt") return Aggregation::sqrt_normalized_sum;
  if (id == "direct-sum") return Aggregation::direct_sum;
  if (id == "top20-mean") return Aggregation::top20_mean;
  throw Error(ErrorKind::config, fmt::format("unknown aggregation mode '{}'", id));
}

std::string_view to_string(Aggregation mode) {
  switch (mode) {
    case Aggregation::sqrt_normalized_sum: return "sqrt-normalized-sum";
    case Aggregation::direct_sum: return "direct-sum";
    case Aggregation::top20_mean: return "top20-mean";
  }
  return "sqrt-normalized-sum";
}

std::vector<SegmentScore> segment_scores(std::span<const Segment> segments, std::span<const double> cot_igs,
                                         Aggregation mode) {
  std::vector<SegmentScore> out;
  out.reserve(segments.size());
  for (const auto& seg : segments) {
    if (seg.last >= cot_igs.size()) {
      throw Error(ErrorKind::join, fmt::format("segment {} reaches token {} but only {} IGs are available",
                                               seg.seg_index, seg.last, cot_igs.size()));
    }
    double abs_sum = 0.0;
    double signed_sum = 0.0;
    for (std::size_t t = seg.first; t <= seg.last; ++t) {
      abs_sum += std::abs(cot_igs[t]);
      signed_sum += cot_igs[t];
    }
    const std::size_t n = seg.n_tokens();
    SegmentScore s;
    s.seg_index = seg.seg_index;
    s.aggregation = mode;
    switch (mode) {
      case Aggregation::sqrt_normalized_sum:
        s.strength = abs_sum / std::sqrt(static_cast<double>(n));
        break;
      case Aggregation::direct_sum:
        s.strength = abs_sum;
        break;
      case Aggregation::top20_mean: {
        std::vector<double> mags;
        mags.reserve(n);
        for (std::size_t t = seg.first; t <= seg.last; ++t) mags.push_back(std::abs(cot_igs[t]));
        const std::size_t top = (n + 4) / 5;
        std::partial_sort(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(top), mags.end(),
                          std::greater<>());
        double sum = 0.0;
        for (std::size_t i = 0; i < top; ++i) sum += mags[i];
        s.strength = sum / static_cast<double>(top);
        break;
      }
    }
    s.consistency = abs_sum == 0.0 ? 1.0 : std::min(1.0, std::abs(signed_sum) / abs_sum);
    out.push_back(s);
  }
  return out;
}

void normalize_strengths(std::vector<SegmentScore>& scores) {
  double total = 0.0;
  for (const auto& s : scores) total += s.strength;
  for (auto& s : scores) {
    s.normalized_strength = total == 0.0 ? 1.0 / static_cast<double>(scores.size()) : s.strength / total;
  }
}

void write_scores_csv_header(std::ostream& out) {
  out << "trace_id,seg_index,strength,normalized_strength,consistency\n";
}

void write_scores_csv(std::ostream& out, std::string_view trace_id, std::span<const SegmentScore> scores) {
  for (const auto& s : scores) {
    out << fmt::format("{},{},{},{},{}\n", trace_id, s.seg_index, s.strength, s.normalized_strength, s.consistency);
  }
}

std::vector<TraceScores> read_scores_csv(std::istream& in) {
  std::vector<TraceScores> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw Error(ErrorKind::format, fmt::format("scores line {}: expected 5 columns", line_no));
    SegmentScore s;
    try {
      s.seg_index = std::stoul(cells[1]);
      s.strength = std::stod(cells[2]);
      s.normalized_strength = std::stod(cells[3]);
      s.consistency = std::stod(cells[4]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::format, fmt::format("scores line {}: bad number", line_no));
    }
    if (out.empty() || out.back().trace_id != cells[0]) out.push_back({cells[0], {}});
    out.back().scores.push_back(s);
  }
  return out;
}

}  // namespace cotig
