// cotig: segment, attribute, score and select chain-of-thought segments, then
// emit loss masks and reports. Every stage reads and writes files in --out.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "cotig/error.hpp"
#include "cotig/pipeline.hpp"
#include "cotig/synthetic.hpp"

namespace {

struct Flags {
  std::string config;
  std::string corpus;
  std::string out;
  std::string train_corpus;
  std::string dump;
  std::string keywords;
  std::string keyword_profile;
  std::string aggregation;
  std::string baselines;
  std::string judge_endpoint;
  std::optional<double> tau, beta, ratio;
  std::optional<std::size_t> steps, k_samples, workers, train_steps;
  std::optional<std::uint64_t> seed;
  std::optional<bool> include_boundaries;
};

void add_run_flags(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config, "JSON run config; flags override its values");
  app.add_option("--corpus", f.corpus, "Trace corpus (NDJSON)");
  app.add_option("--out", f.out, "Artifact directory");
  app.add_option("--train-corpus", f.train_corpus, "Corpus the reference model trains on");
  app.add_option("--dump", f.dump, "Use an existing attribution dump instead of computing IGs");
  app.add_option("--keywords", f.keywords, "Keyword file, one per line");
  app.add_option("--keyword-profile", f.keyword_profile, "paper-main or retro-style");
  app.add_option("--tau", f.tau, "Cumulative strength threshold");
  app.add_option("--beta", f.beta, "Consistency threshold");
  app.add_option("--steps", f.steps, "Integrated-gradient interpolation steps");
  app.add_option("--aggregation", f.aggregation, "sqrt-normalized-sum, direct-sum or top20-mean");
  app.add_option("--include-boundaries", f.include_boundaries, "Always keep the first and last segment");
  app.add_option("--ratio", f.ratio, "Token ratio for ratio-matched baselines");
  app.add_option("--k-samples", f.k_samples, "Samples per prefix for confidence gain");
  app.add_option("--baselines", f.baselines, "Comma-separated baseline methods");
  app.add_option("--train-steps", f.train_steps, "Reference model training steps");
  app.add_option("--judge-endpoint", f.judge_endpoint, "Truncation judge URL (http://host:port/path)");
  app.add_option("--seed", f.seed, "Run seed");
  app.add_option("--workers", f.workers, "Worker threads per stage");
}

cotig::RunConfig effective_config(const Flags& f) {
  using cotig::Error;
  using cotig::ErrorKind;
  if (!f.dump.empty() && (f.steps || f.train_steps || !f.train_corpus.empty())) {
    throw Error(ErrorKind::usage, "--dump replaces attribution; it cannot be combined with --steps, "
                                  "--train-steps or --train-corpus");
  }
  if (!f.keywords.empty() && !f.keyword_profile.empty()) {
    throw Error(ErrorKind::usage, "--keywords and --keyword-profile are mutually exclusive");
  }
  cotig::RunConfig cfg = f.config.empty() ? cotig::RunConfig{} : cotig::RunConfig::load(f.config);
  if (!f.corpus.empty()) cfg.corpus = f.corpus;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (!f.train_corpus.empty()) cfg.train_corpus = f.train_corpus;
  if (!f.dump.empty()) cfg.external_dump = f.dump;
  if (!f.keywords.empty()) cfg.keywords_file = f.keywords;
  if (!f.keyword_profile.empty()) {
    cfg.keyword_profile = f.keyword_profile;
    cfg.keywords_file.clear();
  }
  if (!f.aggregation.empty()) cfg.aggregation = cotig::parse_aggregation(f.aggregation);
  if (!f.judge_endpoint.empty()) cfg.judge_endpoint = f.judge_endpoint;
  if (f.tau) cfg.selection.tau = *f.tau;
  if (f.beta) cfg.selection.beta = *f.beta;
  if (f.include_boundaries) cfg.selection.include_boundaries = *f.include_boundaries;
  if (f.steps) cfg.attribution.steps = *f.steps;
  if (f.ratio) cfg.baseline.token_ratio = *f.ratio;
  if (f.k_samples) cfg.baseline.k_samples = *f.k_samples;
  if (f.train_steps) cfg.model.train_steps = *f.train_steps;
  if (f.seed) cfg.seed = *f.seed;
  if (f.workers) cfg.workers = *f.workers;
  if (!f.baselines.empty()) {
    cfg.baselines.clear();
    std::stringstream ss(f.baselines);
    for (std::string m; std::getline(ss, m, ',');) {
      if (!m.empty()) cfg.baselines.push_back(cotig::parse_baseline_method(m));
    }
  }
  if (f.workers && *f.workers == 0) throw Error(ErrorKind::usage, "--workers must be at least 1");
  cfg.validate();
  return cfg;
}

void write_synthetic(const std::string& dir, std::size_t traces, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  cotig::SyntheticConfig sc;
  sc.traces = traces;
  sc.seed = seed;
  const auto corpus = cotig::generate_synthetic(sc, cotig::ByteTokenizer());
  std::vector<cotig::ReasoningTrace> injected, clean;
  std::ofstream labels(fs::path(dir) / "labels.ndjson", std::ios::binary);
  for (const auto& s : corpus) {
    // Corpus files carry raw text only; the segment stage re-derives structure.
    auto strip = [](cotig::ReasoningTrace t) {
      t.tokens.clear();
      t.answer_tokens.clear();
      t.segments.clear();
      return t;
    };
    injected.push_back(strip(s.trace));
    clean.push_back(strip(s.clean));
    nlohmann::json kinds = nlohmann::json::array();
    for (auto k : s.kinds) kinds.push_back(std::string(cotig::to_string(k)));
    labels << nlohmann::json{{"trace_id", s.trace.trace_id}, {"kinds", kinds}, {"source", s.source}}.dump() << '\n';
  }
  cotig::save_traces(fs::path(dir) / "corpus.ndjson", injected);
  cotig::save_traces(fs::path(dir) / "clean.ndjson", clean);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Integrated-gradient segment selection for chain-of-thought traces"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cotig::kToolVersion));

  Flags flags;
  std::vector<std::pair<CLI::App*, std::optional<cotig::Stage>>> commands;
  for (const auto stage : cotig::kAllStages) {
    auto* sub = app.add_subcommand(std::string(cotig::to_string(stage)), fmt::format("Run the {} stage", cotig::to_string(stage)));
    add_run_flags(*sub, flags);
    commands.emplace_back(sub, stage);
  }
  auto* all = app.add_subcommand("run", "Run every stage in order");
  add_run_flags(*all, flags);
  commands.emplace_back(all, std::nullopt);

  std::string synth_out;
  std::size_t synth_traces = 200;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic arithmetic corpus with injected redundancy");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--traces", synth_traces, "Number of traces");
  synth->add_option("--seed", synth_seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      write_synthetic(synth_out, synth_traces, synth_seed);
      return 0;
    }
    const auto cfg = effective_config(flags);
    for (const auto& [sub, stage] : commands) {
      if (!sub->parsed()) continue;
      if (stage) cotig::run_stage(*stage, cfg);
      else cotig::run_all(cfg);
    }
  } catch (const cotig::Error& e) {
    std::cerr << "cotig: " << e.what() << '\n';
    return cotig::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "cotig: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
