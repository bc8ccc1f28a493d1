#include "cotig/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <fmt/format.h>

#include "cotig/analytics.hpp"
#include "cotig/dump.hpp"
#include "cotig/error.hpp"
#include "cotig/hashing.hpp"
#include "cotig/judge.hpp"
#include "cotig/masking.hpp"
#include "cotig/segmenter.hpp"

namespace cotig {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kStageNames[] = {"segment", "attribute", "score",   "select",
                                            "mask",    "baseline",  "analyze", "report"};

}  // namespace

std::string_view to_string(Stage stage) { return kStageNames[static_cast<std::size_t>(stage)]; }

Stage parse_stage(std::string_view id) {
  for (std::size_t i = 0; i < std::size(kStageNames); ++i) {
    if (kStageNames[i] == id) return static_cast<Stage>(i);
  }
  throw Error(ErrorKind::usage, fmt::format("unknown stage '{}'", id));
}

// ---------------------------------------------------------------------------
// Config

void RunConfig::validate() const {
  attribution.validate();
  selection.validate();
  baseline.validate();
  model.dims.validate();
  if (!(prune_target >= 0.0 && prune_target < 1.0)) {
    throw Error(ErrorKind::config, fmt::format("prune_target must be in [0, 1), got {}", prune_target));
  }
  if (cdf_buckets == 0) throw Error(ErrorKind::config, "cdf_buckets must be >= 1");
  if (workers == 0) throw Error(ErrorKind::config, "workers must be >= 1");
  if (judge_in_flight == 0) throw Error(ErrorKind::config, "judge_in_flight must be >= 1");
  if (!(model.learning_rate > 0.0)) throw Error(ErrorKind::config, "model.learning_rate must be > 0");
}

json RunConfig::to_json() const {
  json methods = json::array();
  for (auto m : baselines) methods.push_back(std::string(cotig::to_string(m)));
  return {
      {"corpus", corpus.string()},
      {"out_dir", out_dir.string()},
      {"train_corpus", train_corpus.string()},
      {"keyword_profile", keyword_profile},
      {"keywords_file", keywords_file.string()},
      {"attribution",
       {{"steps", attribution.steps},
        {"baseline", attribution.baseline_id()},
        {"region", std::string(cotig::to_string(attribution.region))},
        {"forcing_text", attribution.prompt.forcing_text}}},
      {"external_dump", external_dump.string()},
      {"aggregation", std::string(cotig::to_string(aggregation))},
      {"selection",
       {{"tau", selection.tau}, {"beta", selection.beta}, {"include_boundaries", selection.include_boundaries}}},
      {"baselines",
       {{"methods", methods},
        {"ratio", baseline.token_ratio},
        {"random_fraction", baseline.random_fraction},
        {"k_samples", baseline.k_samples},
        {"epsilon_gain", baseline.epsilon_gain},
        {"temperature", baseline.sampling.temperature},
        {"top_p", baseline.sampling.top_p}}},
      {"prune_target", prune_target},
      {"cdf_buckets", cdf_buckets},
      {"model",
       {{"vocab", model.dims.vocab},
        {"dim", model.dims.dim},
        {"context_len", model.dims.context_len},
        {"train_steps", model.train_steps},
        {"learning_rate", model.learning_rate}}},
      {"judge", {{"endpoint", judge_endpoint}, {"model", judge_model}, {"max_in_flight", judge_in_flight}}},
      {"seed", seed},
      {"workers", workers},
  };
}

namespace {

template <typename T>
T get_as(const json& v, std::string_view key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::config, fmt::format("config key '{}' has the wrong type", key));
  }
}

[[noreturn]] void unknown_key(std::string_view section, std::string_view key) {
  throw Error(ErrorKind::config, fmt::format("unknown config key '{}{}'", section, key));
}

void expect_object(const json& v, std::string_view key) {
  if (!v.is_object()) throw Error(ErrorKind::config, fmt::format("config key '{}' must be an object", key));
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, RunConfig c) {
  expect_object(j, "<root>");
  for (const auto& [key, v] : j.items()) {
    if (key == "corpus") c.corpus = get_as<std::string>(v, key);
    else if (key == "out_dir") c.out_dir = get_as<std::string>(v, key);
    else if (key == "train_corpus") c.train_corpus = get_as<std::string>(v, key);
    else if (key == "keyword_profile") c.keyword_profile = get_as<std::string>(v, key);
    else if (key == "keywords_file") c.keywords_file = get_as<std::string>(v, key);
    else if (key == "external_dump") c.external_dump = get_as<std::string>(v, key);
    else if (key == "aggregation") c.aggregation = parse_aggregation(get_as<std::string>(v, key));
    else if (key == "prune_target") c.prune_target = get_as<double>(v, key);
    else if (key == "cdf_buckets") c.cdf_buckets = get_as<std::size_t>(v, key);
    else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
    else if (key == "workers") c.workers = get_as<std::size_t>(v, key);
    else if (key == "attribution") {
      expect_object(v, key);
      for (const auto& [k, x] : v.items()) {
        if (k == "steps") c.attribution.steps = get_as<std::size_t>(x, k);
        else if (k == "baseline") c.attribution.baseline = parse_baseline(get_as<std::string>(x, k), c.attribution.baseline_token);
        else if (k == "region") c.attribution.region = parse_region(get_as<std::string>(x, k));
        else if (k == "forcing_text") c.attribution.prompt.forcing_text = get_as<std::string>(x, k);
        else unknown_key("attribution.", k);
      }
    } else if (key == "selection") {
      expect_object(v, key);
      for (const auto& [k, x] : v.items()) {
        if (k == "tau") c.selection.tau = get_as<double>(x, k);
        else if (k == "beta") c.selection.beta = get_as<double>(x, k);
        else if (k == "include_boundaries") c.selection.include_boundaries = get_as<bool>(x, k);
        else unknown_key("selection.", k);
      }
    } else if (key == "baselines") {
      expect_object(v, key);
      for (const auto& [k, x] : v.items()) {
        if (k == "methods") {
          c.baselines.clear();
          for (const auto& m : get_as<std::vector<std::string>>(x, k)) c.baselines.push_back(parse_baseline_method(m));
        } else if (k == "ratio") c.baseline.token_ratio = get_as<double>(x, k);
        else if (k == "random_fraction") c.baseline.random_fraction = get_as<double>(x, k);
        else if (k == "k_samples") c.baseline.k_samples = get_as<std::size_t>(x, k);
        else if (k == "epsilon_gain") c.baseline.epsilon_gain = get_as<double>(x, k);
        else if (k == "temperature") c.baseline.sampling.temperature = get_as<double>(x, k);
        else if (k == "top_p") c.baseline.sampling.top_p = get_as<double>(x, k);
        else unknown_key("baselines.", k);
      }
    } else if (key == "model") {
      expect_object(v, key);
      for (const auto& [k, x] : v.items()) {
        if (k == "vocab") c.model.dims.vocab = get_as<std::size_t>(x, k);
        else if (k == "dim") c.model.dims.dim = get_as<std::size_t>(x, k);
        else if (k == "context_len") c.model.dims.context_len = get_as<std::size_t>(x, k);
        else if (k == "train_steps") c.model.train_steps = get_as<std::size_t>(x, k);
        else if (k == "learning_rate") c.model.learning_rate = get_as<double>(x, k);
        else unknown_key("model.", k);
      }
    } else if (key == "judge") {
      expect_object(v, key);
      for (const auto& [k, x] : v.items()) {
        if (k == "endpoint") c.judge_endpoint = get_as<std::string>(x, k);
        else if (k == "model") c.judge_model = get_as<std::string>(x, k);
        else if (k == "max_in_flight") c.judge_in_flight = get_as<std::size_t>(x, k);
        else unknown_key("judge.", k);
      }
    } else {
      unknown_key("", key);
    }
  }
  return c;
}

RunConfig RunConfig::from_json(const json& j) { return from_json(j, RunConfig{}); }

RunConfig RunConfig::load(const fs::path& path) { return load(path, RunConfig{}); }

RunConfig RunConfig::load(const fs::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, fmt::format("cannot open config file {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::config, fmt::format("{}: {}", path.string(), e.what()));
  }
  return from_json(j, std::move(base));
}

// ---------------------------------------------------------------------------
// Workers

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(workers, 1), std::max<std::size_t>(n, 1));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Model

ReferenceModel build_model(const RunConfig& cfg, const std::vector<ReasoningTrace>& corpus) {
  auto model = ReferenceModel::init(cfg.seed, cfg.model.dims);
  if (cfg.model.train_steps == 0) return model;
  std::vector<ReasoningTrace> train_traces;
  if (!cfg.train_corpus.empty()) train_traces = load_traces(cfg.train_corpus, model.tokenizer());
  const auto& source = cfg.train_corpus.empty() ? corpus : train_traces;
  std::vector<std::vector<TokenId>> sequences;
  sequences.reserve(source.size());
  for (const auto& t : source) {
    auto ids = layout_trace(model, t, cfg.attribution.prompt).ids;
    if (ids.size() < model.context_len()) ids.push_back(special::eos);
    sequences.push_back(std::move(ids));
  }
  TrainConfig tc;
  tc.steps = cfg.model.train_steps;
  tc.learning_rate = cfg.model.learning_rate;
  tc.seed = derive_seed(cfg.seed, 1);
  train(model, sequences, tc);
  return model;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

struct StageIo {
  const RunConfig& cfg;
  Stage stage;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;

  fs::path path(std::string_view name) const { return cfg.out_dir / name; }

  /// Path of an upstream artifact; missing files name the stage that makes them.
  fs::path need(std::string_view name, Stage producer) {
    const fs::path p = path(name);
    if (!fs::exists(p)) {
      throw Error(ErrorKind::pipeline_order,
                  fmt::format("{} needs {}; run the '{}' stage first", to_string(stage), name, to_string(producer)));
    }
    inputs[std::string(name)] = sha256_file(p);
    return p;
  }

  void external(const fs::path& p) {
    if (!fs::exists(p)) throw Error(ErrorKind::io, fmt::format("input file {} does not exist", p.string()));
    inputs[p.string()] = sha256_file(p);
  }

  void write(std::string_view name, const std::string& content) {
    const fs::path p = path(name);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, fmt::format("cannot write {}", p.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) throw Error(ErrorKind::io, fmt::format("failed writing {}", p.string()));
    outputs[std::string(name)] = sha256_hex(content);
  }

  void record_manifest() {
    const fs::path p = path(artifact::manifest);
    json manifest = json::object();
    if (fs::exists(p)) {
      std::ifstream in(p);
      try {
        manifest = json::parse(in);
      } catch (const json::parse_error&) {
        manifest = json::object();
      }
    }
    const json config = cfg.to_json();
    const std::string config_hash = sha256_hex(config.dump());
    manifest["tool_version"] = kToolVersion;
    manifest["config"] = config;
    manifest["config_hash"] = config_hash;
    manifest["stages"][std::string(to_string(stage))] = {
        {"config_hash", config_hash}, {"inputs", inputs}, {"outputs", outputs}};
    write_text(p, manifest.dump(2) + "\n");
  }

  static void write_text(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::io, fmt::format("cannot write {}", p.string()));
  }
};

template <typename T, typename Fn>
std::vector<T> map_traces(const RunConfig& cfg, std::size_t n, Fn fn) {
  std::vector<T> out(n);
  parallel_for(n, cfg.workers, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

std::vector<ReasoningTrace> read_segmented(StageIo& io) {
  const ByteTokenizer tokenizer(io.cfg.model.dims.vocab);
  return load_traces(io.need(artifact::traces, Stage::segment), tokenizer);
}

std::string keyword_profile_id(const RunConfig& cfg) {
  if (cfg.keywords_file.empty()) return cfg.keyword_profile;
  return "file:" + cfg.keywords_file.filename().string();
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot open {}", p.string()));
  return in;
}

std::vector<SegmentScore> scores_for(const std::unordered_map<std::string, const TraceScores*>& by_id,
                                     const ReasoningTrace& trace) {
  auto it = by_id.find(trace.trace_id);
  if (it == by_id.end()) throw Error(ErrorKind::join, fmt::format("no scores for trace '{}'", trace.trace_id));
  if (it->second->scores.size() != trace.segment_count()) {
    throw Error(ErrorKind::join, fmt::format("trace '{}' has {} segments but {} scores", trace.trace_id,
                                             trace.segment_count(), it->second->scores.size()));
  }
  return it->second->scores;
}

std::vector<TraceScores> read_scores(StageIo& io) {
  auto in = open_in(io.need(artifact::scores, Stage::score));
  return read_scores_csv(in);
}

std::unordered_map<std::string, const TraceScores*> index_scores(const std::vector<TraceScores>& all) {
  std::unordered_map<std::string, const TraceScores*> by_id;
  for (const auto& s : all) by_id.emplace(s.trace_id, &s);
  return by_id;
}

std::vector<SelectionRecord> read_selection_for(StageIo& io, const std::vector<ReasoningTrace>& traces) {
  auto in = open_in(io.need(artifact::selection, Stage::select));
  auto records = read_selections(in);
  std::unordered_map<std::string, SelectionRecord*> by_id;
  for (auto& r : records) by_id.emplace(r.trace_id, &r);
  std::vector<SelectionRecord> ordered;
  ordered.reserve(traces.size());
  for (const auto& t : traces) {
    auto it = by_id.find(t.trace_id);
    if (it == by_id.end()) throw Error(ErrorKind::join, fmt::format("no selection for trace '{}'", t.trace_id));
    ordered.push_back(*it->second);
  }
  return ordered;
}

SelectionResult to_result(const SelectionRecord& r) {
  SelectionResult s;
  s.ranking = r.ranking;
  s.k_star = r.k_star;
  s.important = r.important;
  return s;
}

void stage_segment(StageIo& io) {
  const auto& cfg = io.cfg;
  if (cfg.corpus.empty()) throw Error(ErrorKind::usage, "segment needs a corpus path");
  io.external(cfg.corpus);
  const KeywordSet keywords =
      cfg.keywords_file.empty() ? default_keywords(cfg.keyword_profile) : load_keywords(cfg.keywords_file);
  if (!cfg.keywords_file.empty()) io.external(cfg.keywords_file);
  auto traces = load_traces(cfg.corpus, ByteTokenizer(cfg.model.dims.vocab));
  parallel_for(traces.size(), cfg.workers, [&](std::size_t i) { segment_trace(traces[i], keywords); });
  std::ostringstream out;
  write_traces(out, traces);
  io.write(artifact::traces, out.str());
}

void stage_attribute(StageIo& io) {
  const auto& cfg = io.cfg;
  const auto traces = read_segmented(io);
  Dump dump;
  if (!cfg.external_dump.empty()) {
    io.external(cfg.external_dump);
    dump = read_dump(cfg.external_dump);
    join_dump(traces, dump);
  } else {
    if (!cfg.train_corpus.empty()) io.external(cfg.train_corpus);
    const auto model = build_model(cfg, traces);
    dump.header = make_header(model.model_id(), cfg.attribution, keyword_profile_id(cfg));
    dump.records = map_traces<DumpRecord>(cfg, traces.size(), [&](std::size_t i) {
      return to_record(integrated_gradients(model, traces[i], cfg.attribution));
    });
  }
  std::ostringstream out;
  write_dump(out, dump);
  io.write(artifact::attributions, out.str());
}

void stage_score(StageIo& io) {
  const auto& cfg = io.cfg;
  const auto traces = read_segmented(io);
  const auto dump = read_dump(io.need(artifact::attributions, Stage::attribute));
  const auto attributions = join_dump(traces, dump);
  const auto scores = map_traces<std::vector<SegmentScore>>(cfg, traces.size(), [&](std::size_t i) {
    auto s = segment_scores(traces[i].segments, attributions[i].cot_igs(), cfg.aggregation);
    normalize_strengths(s);
    return s;
  });
  std::ostringstream out;
  write_scores_csv_header(out);
  for (std::size_t i = 0; i < traces.size(); ++i) write_scores_csv(out, traces[i].trace_id, scores[i]);
  io.write(artifact::scores, out.str());
}

void stage_select(StageIo& io) {
  const auto& cfg = io.cfg;
  const auto traces = read_segmented(io);
  const auto all = read_scores(io);
  const auto by_id = index_scores(all);
  std::vector<SelectionRecord> records;
  records.reserve(traces.size());
  for (const auto& t : traces) {
    const auto scores = scores_for(by_id, t);
    records.push_back(to_record(t.trace_id, select_important(scores, t.segments, cfg.selection)));
  }
  std::ostringstream out;
  write_selections(out, records);
  io.write(artifact::selection, out.str());
}

void stage_mask(StageIo& io) {
  const auto& cfg = io.cfg;
  const auto traces = read_segmented(io);
  const auto selections = read_selection_for(io, traces);
  const auto all = read_scores(io);
  const auto by_id = index_scores(all);
  std::vector<LossMask> masks;
  std::vector<ReasoningTrace> pruned;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    masks.push_back(build_loss_mask(traces[i], selections[i].important));
    pruned.push_back(prune_trace(traces[i], selections[i].important, scores_for(by_id, traces[i]), cfg.prune_target)
                         .trace);
  }
  std::ostringstream m;
  write_masks(m, masks);
  io.write(artifact::masks, m.str());
  std::ostringstream p;
  write_traces(p, pruned);
  io.write(artifact::pruned, p.str());
}

bool is_ablation(BaselineMethod m) {
  return m == BaselineMethod::random_segments || m == BaselineMethod::top_abs_ig_tokens ||
         m == BaselineMethod::top_signed_ig_tokens || m == BaselineMethod::high_strength_only;
}

void stage_baseline(StageIo& io) {
  const auto& cfg = io.cfg;
  const auto traces = read_segmented(io);
  const bool needs_model = std::any_of(cfg.baselines.begin(), cfg.baselines.end(), [](BaselineMethod m) {
    return m == BaselineMethod::confidence_gain || m == BaselineMethod::ppl_removal || m == BaselineMethod::entropy;
  });
  const bool needs_ig = std::any_of(cfg.baselines.begin(), cfg.baselines.end(), is_ablation);

  std::optional<ReferenceModel> model;
  if (needs_model) {
    if (!cfg.train_corpus.empty()) io.external(cfg.train_corpus);
    model.emplace(build_model(cfg, traces));
  }
  std::vector<TokenAttribution> attributions;
  std::vector<TraceScores> all_scores;
  std::unordered_map<std::string, const TraceScores*> by_id;
  if (needs_ig) {
    attributions = join_dump(traces, read_dump(io.need(artifact::attributions, Stage::attribute)));
    all_scores = read_scores(io);
    by_id = index_scores(all_scores);
  }

  for (const auto method : cfg.baselines) {
    BaselinePolicy policy = cfg.baseline;
    policy.method = method;
    policy.seed = cfg.seed;
    policy.prompt = cfg.attribution.prompt;

    struct Outcome {
      bool excluded = false;
      std::set<std::size_t> important;
      std::optional<LossMask> mask;
    };
    const auto outcomes = map_traces<Outcome>(cfg, traces.size(), [&](std::size_t i) {
      const auto& t = traces[i];
      Outcome o;
      switch (method) {
        case BaselineMethod::first_correct:
          try {
            o.important = first_correct_select(t);
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::no_decision) throw;
            o.excluded = true;
            return o;
          }
          break;
        case BaselineMethod::confidence_gain:
          o.important = confidence_gain_select(*model, t, policy).important;
          break;
        case BaselineMethod::ppl_removal:
          o.important = ppl_removal_select(*model, t, policy).important;
          break;
        case BaselineMethod::entropy:
          o.important = entropy_select(*model, t, policy);
          break;
        default: {
          const auto scores = scores_for(by_id, t);
          auto r = ablation_select(t, scores, attributions[i], policy, cfg.selection.include_boundaries);
          o.important = std::move(r.important);
          o.mask = std::move(r.token_mask);
          break;
        }
      }
      if (!is_ablation(method) && cfg.selection.include_boundaries) add_boundaries(o.important, t.segments);
      if (!o.mask) o.mask = build_loss_mask(t, o.important);
      return o;
    });

    std::vector<SelectionRecord> records;
    std::vector<LossMask> masks;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      if (outcomes[i].excluded) continue;
      SelectionRecord r;
      r.trace_id = traces[i].trace_id;
      r.method = std::string(to_string(method));
      r.important = outcomes[i].important;
      records.push_back(std::move(r));
      masks.push_back(*outcomes[i].mask);
    }
    std::ostringstream sel;
    write_selections(sel, records);
    io.write(fmt::format("baseline_{}.ndjson", to_string(method)), sel.str());
    std::ostringstream msk;
    write_masks(msk, masks);
    io.write(fmt::format("baseline_{}_masks.ndjson", to_string(method)), msk.str());
  }
}

std::string csv_double(double v) { return fmt::format("{}", v); }

void stage_analyze(StageIo& io) {
  const auto& cfg = io.cfg;
  const auto traces = read_segmented(io);
  const auto selections = read_selection_for(io, traces);
  const auto all = read_scores(io);
  const auto by_id = index_scores(all);
  if (!cfg.train_corpus.empty()) io.external(cfg.train_corpus);
  const auto model = build_model(cfg, traces);

  auto stats = map_traces<std::vector<SegmentStats>>(
      cfg, traces.size(), [&](std::size_t i) { return segment_stats(model, traces[i], cfg.attribution.prompt); });

  if (!cfg.judge_endpoint.empty()) {
    JudgeConfig jc = JudgeConfig::from_env(cfg.judge_endpoint);
    jc.model = cfg.judge_model;
    jc.max_in_flight = cfg.judge_in_flight;
    std::vector<JudgeJob> jobs;
    std::vector<std::pair<std::size_t, std::size_t>> where;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      for (std::size_t m = 1; m + 1 < traces[i].segment_count(); ++m) {
        jobs.push_back({std::string(traces[i].segment_text(m - 1)), std::string(traces[i].segment_text(m)),
                        std::string(traces[i].segment_text(m + 1))});
        where.emplace_back(i, m);
      }
    }
    const auto outcomes = judge_many(jc, jobs);
    for (std::size_t k = 0; k < jobs.size(); ++k) {
      if (!outcomes[k].verdict) {
        throw Error(ErrorKind::transport, fmt::format("judge failed on {} segment {}: {}",
                                                      traces[where[k].first].trace_id, where[k].second,
                                                      outcomes[k].error));
      }
      stats[where[k].first][where[k].second].is_truncated = outcomes[k].verdict->truncated;
    }
  }

  std::ostringstream out;
  out << "trace_id,seg_index,n_tokens,mean_nll,mean_entropy,bleu_vs_preceding,is_truncated,normalized_strength,"
         "consistency,important\n";
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto scores = scores_for(by_id, traces[i]);
    for (const auto& s : stats[i]) {
      const std::string truncated = s.is_truncated ? (*s.is_truncated ? "1" : "0") : "";
      out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", traces[i].trace_id, s.seg_index,
                         traces[i].segments[s.seg_index].n_tokens(), csv_double(s.mean_nll),
                         csv_double(s.mean_entropy), csv_double(s.bleu_vs_preceding), truncated,
                         csv_double(scores[s.seg_index].normalized_strength),
                         csv_double(scores[s.seg_index].consistency),
                         selections[i].important.contains(s.seg_index) ? 1 : 0);
    }
  }
  io.write(artifact::segment_stats, out.str());

  std::vector<SelectionResult> results;
  for (const auto& r : selections) results.push_back(to_result(r));
  std::ostringstream pos;
  write_positional_csv(pos, positional_stats(traces, results));
  io.write(artifact::positional, pos.str());
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

void stage_report(StageIo& io) {
  const auto& cfg = io.cfg;
  const auto all = read_scores(io);
  std::vector<std::vector<double>> strengths;
  std::size_t segments = 0;
  for (const auto& t : all) {
    std::vector<double> s;
    for (const auto& x : t.scores) s.push_back(x.normalized_strength);
    segments += s.size();
    strengths.push_back(std::move(s));
  }
  const auto cdf = strength_cdf(strengths, cfg.cdf_buckets);
  std::ostringstream c;
  c << "percentile,cumulative\n";
  for (std::size_t b = 0; b < cdf.percentile.size(); ++b) {
    c << fmt::format("{},{}\n", csv_double(cdf.percentile[b]), csv_double(cdf.cumulative[b]));
  }
  io.write(artifact::cdf, c.str());
  std::ostringstream l;
  l << "series,x,y\n";
  for (std::size_t b = 0; b < cdf.percentile.size(); ++b) {
    l << fmt::format("ig-strength-cdf,{},{}\n", csv_double(cdf.percentile[b]), csv_double(cdf.cumulative[b]));
  }
  io.write(artifact::cdf_long, l.str());

  // Selection and mask coverage.
  auto sin = open_in(io.need(artifact::selection, Stage::select));
  const auto selections = read_selections(sin);
  auto min = open_in(io.need(artifact::masks, Stage::mask));
  const auto masks = read_masks(min);
  double k_sum = 0.0;
  std::size_t important = 0;
  for (const auto& s : selections) {
    k_sum += static_cast<double>(s.k_star);
    important += s.important.size();
  }
  double coverage = 0.0;
  for (const auto& m : masks) coverage += m.coverage_ratio();

  // Repetition and truncation shares from the per-segment table.
  auto tin = open_in(io.need(artifact::segment_stats, Stage::analyze));
  std::string line;
  std::getline(tin, line);
  std::size_t repetitive = 0, repetitive_unimportant = 0, judged = 0, truncated = 0;
  std::size_t judged_important = 0, truncated_important = 0, judged_unimportant = 0, truncated_unimportant = 0;
  while (std::getline(tin, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 10) throw Error(ErrorKind::parse, fmt::format("malformed segment_stats row: {}", line));
    const bool imp = cells[9] == "1";
    if (std::stod(cells[5]) > kRepetitionBleu) {
      ++repetitive;
      if (!imp) ++repetitive_unimportant;
    }
    if (!cells[6].empty()) {
      const bool tr = cells[6] == "1";
      ++judged;
      truncated += tr ? 1 : 0;
      if (imp) {
        ++judged_important;
        truncated_important += tr ? 1 : 0;
      } else {
        ++judged_unimportant;
        truncated_unimportant += tr ? 1 : 0;
      }
    }
  }

  const auto n = static_cast<double>(std::max<std::size_t>(all.size(), 1));
  const auto frac = PositionalReport::fraction;
  std::ostringstream s;
  s << "metric,value\n";
  s << fmt::format("traces,{}\n", all.size());
  s << fmt::format("segments,{}\n", segments);
  s << fmt::format("mean_k_star,{}\n", csv_double(k_sum / n));
  s << fmt::format("important_segment_share,{}\n", csv_double(frac(important, segments)));
  s << fmt::format("mean_token_coverage,{}\n", csv_double(coverage / static_cast<double>(std::max<std::size_t>(masks.size(), 1))));
  s << fmt::format("repetitive_segments,{}\n", repetitive);
  s << fmt::format("repetitive_unimportant_share,{}\n", csv_double(frac(repetitive_unimportant, repetitive)));
  s << fmt::format("judged_segments,{}\n", judged);
  s << fmt::format("truncated_share,{}\n", csv_double(frac(truncated, judged)));
  s << fmt::format("truncated_share_important,{}\n", csv_double(frac(truncated_important, judged_important)));
  s << fmt::format("truncated_share_unimportant,{}\n", csv_double(frac(truncated_unimportant, judged_unimportant)));
  io.write(artifact::summary, s.str());
}

struct Requirement {
  std::string_view file;
  Stage producer;
};

// Upstream artifacts each stage always reads, nearest producer first, so a
// missing input names the stage that should run next.
std::vector<Requirement> requirements(Stage stage) {
  namespace a = artifact;
  switch (stage) {
    case Stage::segment: return {};
    case Stage::attribute: return {{a::traces, Stage::segment}};
    case Stage::score: return {{a::attributions, Stage::attribute}, {a::traces, Stage::segment}};
    case Stage::select: return {{a::scores, Stage::score}, {a::traces, Stage::segment}};
    case Stage::mask: return {{a::selection, Stage::select}, {a::scores, Stage::score}, {a::traces, Stage::segment}};
    case Stage::baseline: return {{a::traces, Stage::segment}};
    case Stage::analyze: return {{a::selection, Stage::select}, {a::scores, Stage::score}, {a::traces, Stage::segment}};
    case Stage::report:
      return {{a::segment_stats, Stage::analyze}, {a::masks, Stage::mask}, {a::selection, Stage::select}, {a::scores, Stage::score}};
  }
  return {};
}

}  // namespace

void run_stage(Stage stage, const RunConfig& cfg) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw Error(ErrorKind::io, fmt::format("cannot create {}: {}", cfg.out_dir.string(), ec.message()));
  for (const auto& r : requirements(stage)) {
    if (!fs::exists(cfg.out_dir / r.file)) {
      throw Error(ErrorKind::pipeline_order, fmt::format("{} needs {}; run the '{}' stage first", to_string(stage),
                                                         r.file, to_string(r.producer)));
    }
  }
  StageIo io{cfg, stage, {}, {}};
  switch (stage) {
    case Stage::segment: stage_segment(io); break;
    case Stage::attribute: stage_attribute(io); break;
    case Stage::score: stage_score(io); break;
    case Stage::select: stage_select(io); break;
    case Stage::mask: stage_mask(io); break;
    case Stage::baseline: stage_baseline(io); break;
    case Stage::analyze: stage_analyze(io); break;
    case Stage::report: stage_report(io); break;
  }
  io.record_manifest();
}

void run_all(const RunConfig& cfg) {
  for (const auto stage : kAllStages) run_stage(stage, cfg);
}

}  // namespace cotig
