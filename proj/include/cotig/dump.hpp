#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cotig/attribution.hpp"
#include "cotig/trace.hpp"

namespace cotig {

inline constexpr int kDumpFormatVersion = 1;

/// First line of an attribution dump: run metadata shared by every record.
struct DumpHeader {
  int format_version = kDumpFormatVersion;
  std::string model_id;
  std::string baseline = "pad";
  std::size_t steps = 50;
  std::string keyword_profile = "paper-main";
  /// What F measures; the built-in oracles score the summed answer log-probability.
  std::string score_target = "sum-answer-logprob";
  std::string attributed_region = "cot-only";
  std::string tokenizer = "byte";
  /// Producer-specific keys, carried through untouched.
  nlohmann::json extra = nlohmann::json::object();

  friend bool operator==(const DumpHeader&, const DumpHeader&) = default;
};

struct DumpRecord {
  std::string trace_id;
  std::vector<double> token_igs;
  std::size_t query_tokens = 0;
  std::optional<double> completeness_gap;
  /// Token spans as seen by the producer, when it tokenized the trace itself.
  std::vector<Token> tokens;

  friend bool operator==(const DumpRecord&, const DumpRecord&) = default;
};

struct Dump {
  DumpHeader header;
  std::vector<DumpRecord> records;

  friend bool operator==(const Dump&, const Dump&) = default;
};

DumpHeader make_header(const std::string& model_id, const AttributionConfig& cfg, const std::string& keyword_profile);
DumpRecord to_record(const TokenAttribution& attribution);

void write_dump(std::ostream& out, const Dump& dump);
void write_dump(const std::filesystem::path& path, const Dump& dump);
/// Throws Error(incompatible) on a format_version other than kDumpFormatVersion.
Dump read_dump(std::istream& in);
Dump read_dump(const std::filesystem::path& path);

/// Matches records to traces by id, in trace order. Throws Error(join) for a
/// record naming an unknown trace, a trace without a record, or a length mismatch.
std::vector<TokenAttribution> join_dump(const std::vector<ReasoningTrace>& traces, const Dump& dump);

}  // namespace cotig
