#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cotig/attribution.hpp"
#include "cotig/baselines.hpp"
#include "cotig/reference_model.hpp"
#include "cotig/scoring.hpp"
#include "cotig/selection.hpp"
#include "cotig/trace.hpp"

namespace cotig {

inline constexpr std::string_view kToolVersion = "cotig 1.0.0";

struct ModelConfig {
  ModelDims dims;
  std::size_t train_steps = 300;
  double learning_rate = 3e-3;
};

struct RunConfig {
  std::filesystem::path corpus;
  std::filesystem::path out_dir = "cotig-out";
  /// Corpus the reference model is trained on; the main corpus when empty.
  std::filesystem::path train_corpus;
  std::string keyword_profile = "paper-main";
  /// One keyword per line; overrides keyword_profile when set.
  std::filesystem::path keywords_file;
  AttributionConfig attribution;
  /// A dump from another producer used in place of computing IGs.
  std::filesystem::path external_dump;
  Aggregation aggregation = Aggregation::sqrt_normalized_sum;
  SelectionPolicy selection;
  std::vector<BaselineMethod> baselines;
  /// Shared knobs of every baseline method; `method` is set per run.
  BaselinePolicy baseline;
  double prune_target = 0.30;
  std::size_t cdf_buckets = 20;
  ModelConfig model;
  /// Truncation judge for the analyze stage; skipped when empty.
  std::string judge_endpoint;
  std::string judge_model = "judge";
  std::size_t judge_in_flight = 4;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  /// Throws Error(config) on out-of-range values.
  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  /// Keys present in `j` override `base`; unknown keys are a config error.
  static RunConfig from_json(const nlohmann::json& j, RunConfig base);
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path, RunConfig base);
  static RunConfig load(const std::filesystem::path& path);
};

enum class Stage { segment, attribute, score, select, mask, baseline, analyze, report };

inline constexpr Stage kAllStages[] = {Stage::segment, Stage::attribute, Stage::score,   Stage::select,
                                       Stage::mask,    Stage::baseline,  Stage::analyze, Stage::report};

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view id);

/// Artifact file names inside the output directory.
namespace artifact {
inline constexpr std::string_view traces = "traces.ndjson";
inline constexpr std::string_view attributions = "attributions.ndjson";
inline constexpr std::string_view scores = "scores.csv";
inline constexpr std::string_view selection = "selection.ndjson";
inline constexpr std::string_view masks = "masks.ndjson";
inline constexpr std::string_view pruned = "pruned.ndjson";
inline constexpr std::string_view segment_stats = "segment_stats.csv";
inline constexpr std::string_view positional = "positional.csv";
inline constexpr std::string_view cdf = "cdf.csv";
inline constexpr std::string_view cdf_long = "cdf_long.csv";
inline constexpr std::string_view summary = "summary.csv";
inline constexpr std::string_view manifest = "manifest.json";
}  // namespace artifact

/// Runs one stage: reads the artifacts of earlier stages from cfg.out_dir,
/// writes its own, and records config/input/output hashes in the manifest.
/// Throws Error(pipeline_order) naming the stage whose artifact is missing.
void run_stage(Stage stage, const RunConfig& cfg);
void run_all(const RunConfig& cfg);

/// The seeded reference model, trained on cfg.train_corpus (or `corpus`) when
/// model.train_steps > 0. Deterministic in cfg.
ReferenceModel build_model(const RunConfig& cfg, const std::vector<ReasoningTrace>& corpus);

/// Calls fn(i) for i in [0, n) on up to `workers` threads. Rethrows the
/// exception of the lowest failing index after all workers finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace cotig
