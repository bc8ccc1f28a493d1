#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cotig/trace.hpp"

namespace cotig {

enum class Aggregation { sqrt_normalized_sum, direct_sum, top20_mean };

Aggregation parse_aggregation(std::string_view id);
std::string_view to_string(Aggregation mode);

struct SegmentScore {
  std::size_t seg_index = 0;
  double strength = 0.0;
  double normalized_strength = 0.0;
  double consistency = 1.0;
  Aggregation aggregation = Aggregation::sqrt_normalized_sum;

  friend bool operator==(const SegmentScore&, const SegmentScore&) = default;
};

/// Strength and direction consistency per segment from per-token IGs.
///   sqrt_normalized_sum: sum|IG| / sqrt(N)
///   direct_sum:          sum|IG|
///   top20_mean:          mean of the ceil(N/5) largest |IG|
/// consistency = |sum IG| / sum|IG|, with 0/0 defined as 1.
std::vector<SegmentScore> segment_scores(std::span<const Segment> segments, std::span<const double> cot_igs,
                                         Aggregation mode = Aggregation::sqrt_normalized_sum);

/// strength / sum of strengths within the trace; uniform 1/M when every strength is zero.
void normalize_strengths(std::vector<SegmentScore>& scores);

/// CSV header + rows: trace_id,seg_index,strength,normalized_strength,consistency
void write_scores_csv_header(std::ostream& out);
void write_scores_csv(std::ostream& out, std::string_view trace_id, std::span<const SegmentScore> scores);

/// Reads a scores CSV back, grouped by trace in file order.
struct TraceScores {
  std::string trace_id;
  std::vector<SegmentScore> scores;
};
std::vector<TraceScores> read_scores_csv(std::istream& in);

}  // namespace cotig
