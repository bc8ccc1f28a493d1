// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"

#include "cotig/analytics.hpp"
#include "cotig/attribution.hpp"
#include "cotig/error.hpp"
#include "cotig/masking.hpp"
#include "cotig/oracle_hooks.hpp"
#include "cotig/pipeline.hpp"
#include "cotig/reference_model.hpp"
#include "cotig/scoring.hpp"
#include "cotig/segmenter.hpp"
#include "cotig/selection.hpp"
#include "cotig/synthetic.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace cotig;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<Verdict()> run;
};

// Random trace: lower-case words, 1-5 keyword-separated segments, numeric answer.
ReasoningTrace random_trace(std::mt19937_64& rng, const std::string& id) {
  auto word = [&] {
    std::string w(2 + rng() % 6, 'a');
    for (auto& c : w) c = static_cast<char>('a' + rng() % 26);
    return w;
  };
  auto words = [&](std::size_t n) {
    std::string s = word();
    for (std::size_t i = 1; i < n; ++i) s += " " + word();
    return s;
  };
  static const char* kJoins[] = {"\n\nWait, ", "\n\nHowever, ", "\n\nAlternatively, ", "\n\nAnother "};
  ReasoningTrace t;
  t.trace_id = id;
  t.query = words(3 + rng() % 6) + "?";
  t.cot = words(3 + rng() % 8) + ".";
  const std::size_t segments = 1 + rng() % 5;
  for (std::size_t m = 1; m < segments; ++m) t.cot += kJoins[rng() % 4] + words(2 + rng() % 8) + ".";
  t.answer = std::to_string(rng() % 1000);
  const ByteTokenizer tok;
  t.tokens = tok.tokenize(t.cot);
  t.answer_tokens = tok.tokenize(t.answer);
  segment_trace(t, default_keywords("paper-main"));
  return t;
}

// Per-segment scores from random token IGs on a trace of M one-byte segments.
struct RandomScores {
  ReasoningTrace trace;
  std::vector<double> igs;
};

RandomScores random_scores(std::mt19937_64& rng, std::size_t max_segments) {
  const std::size_t m = 1 + rng() % max_segments;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::size_t at = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t n = 1 + rng() % 6;
    ranges.emplace_back(at, at + n - 1);
    at += n;
  }
  RandomScores r;
  r.trace.trace_id = "r";
  r.trace.query = "q";
  r.trace.answer = "1";
  r.trace.cot = std::string(at, 'x');
  r.trace.tokens = ByteTokenizer().tokenize(r.trace.cot);
  r.trace.segments = segments_from_ranges(r.trace.tokens, at, ranges);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto mode = rng() % 10;
  for (std::size_t t = 0; t < at; ++t) {
    double v = normal(rng);
    if (mode == 0) v = 0.0;                   // all-zero trace: uniform strengths
    if (mode == 1) v = std::abs(v);           // one-signed: consistency 1
    if (mode == 2) v = (t % 2 ? 0.5 : -0.5);  // many exact ties
    r.igs.push_back(v);
  }
  return r;
}

std::vector<SegmentScore> scores_for(const RandomScores& r, double scale = 1.0) {
  std::vector<double> igs = r.igs;
  for (double& v : igs) v *= scale;
  auto s = segment_scores(r.trace.segments, igs);
  normalize_strengths(s);
  return s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = slurp(e.path());
  return files;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(COTIG_CLI) + " " + args + " > /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / fmt::format("cotig-acceptance-{}-{}", ::getpid(), name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Verdict ig_quadrature() {
  const QuadraticHook hook(3.0);
  ReasoningTrace t;
  t.trace_id = "q";
  t.cot = "x";
  t.tokens = ByteTokenizer().tokenize(t.cot);
  AttributionConfig cfg;
  const auto a50 = integrated_gradients(hook, t, cfg);
  cfg.steps = 100;
  const auto a100 = integrated_gradients(hook, t, cfg);
  // Right-endpoint sum of 2 x0^2 j / J^2 over j = 1..J.
  double closed = 0.0;
  for (int j = 1; j <= 50; ++j) closed += 2.0 * 9.0 * j / 2500.0;
  const double ig = a50.cot_igs()[0];
  const double ratio = a100.completeness_gap / a50.completeness_gap;
  const bool pass = std::abs(ig - 9.18) <= 1e-12 && std::abs(ig - closed) <= 1e-12 && ratio >= 0.45 && ratio <= 0.55;
  return {pass, fmt::format("IG={:.15g} closed-form={:.15g} gap ratio J100/J50={:.4f}", ig, closed, ratio)};
}

Verdict ig_completeness() {
  const auto model = ReferenceModel::init(0, ModelDims{});
  std::mt19937_64 rng(2024);
  double worst50 = 0.0, worst300 = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto t = random_trace(rng, fmt::format("c{}", i));
    AttributionConfig cfg;
    worst50 = std::max(worst50, integrated_gradients(model, t, cfg).relative_gap());
    cfg.steps = 300;
    worst300 = std::max(worst300, integrated_gradients(model, t, cfg).relative_gap());
  }
  return {worst50 <= 0.05 && worst300 <= 0.01,
          fmt::format("worst relative gap J=50: {:.4f} (<= 0.05), J=300: {:.4f} (<= 0.01)", worst50, worst300)};
}

Verdict gradient_exactness() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto model = ReferenceModel::init(seed, ModelDims{});
    worst = std::max(worst, fd_check(model, seed, 1e-3));
  }
  return {worst <= 1e-4, fmt::format("worst fd_check over 10 seeds: {:.3e} (<= 1e-4)", worst)};
}

Verdict selection_oracle() {
  std::mt19937_64 rng(77);
  std::size_t mismatches = 0, checks = 0;
  for (int v = 0; v < 1000; ++v) {
    const auto r = random_scores(rng, 12);
    const auto s = scores_for(r);
    std::vector<double> norm, cons;
    for (const auto& x : s) {
      norm.push_back(x.normalized_strength);
      cons.push_back(x.consistency);
    }
    std::vector<std::size_t> ranking(norm.size());
    for (std::size_t i = 0; i < norm.size(); ++i) {
      std::size_t rank = 0;
      for (std::size_t j = 0; j < norm.size(); ++j) rank += norm[j] > norm[i] || (norm[j] == norm[i] && j < i);
      ranking[rank] = i;
    }
    for (double tau : {0.5, 0.7, 0.9, 1.0}) {
      for (double beta : {0.5, 0.8, 0.95, 1.0}) {
        std::size_t k_star = 0;
        const auto expected = test::brute_force_selection(norm, cons, tau, beta, true, &k_star);
        const auto got = select_important(s, r.trace.segments, {tau, beta, true});
        ++checks;
        if (got.ranking != ranking || got.k_star != k_star || got.important != expected) ++mismatches;
      }
    }
  }
  return {mismatches == 0, fmt::format("{} mismatches in {} selections", mismatches, checks)};
}

Verdict scale_invariance() {
  std::mt19937_64 rng(5);
  std::size_t mismatches = 0, checks = 0;
  for (int v = 0; v < 300; ++v) {
    const auto r = random_scores(rng, 12);
    const auto base = select_important(scores_for(r), r.trace.segments, {});
    for (double c : {0.1, 3.0, 100.0}) {
      const auto scaled = select_important(scores_for(r, c), r.trace.segments, {});
      ++checks;
      if (scaled.ranking != base.ranking || scaled.k_star != base.k_star || scaled.important != base.important) {
        ++mismatches;
      }
    }
  }
  return {mismatches == 0, fmt::format("{} mismatches in {} scaled selections", mismatches, checks)};
}

Verdict loss_identity() {
  const auto model = ReferenceModel::init(3, ModelDims{});
  std::mt19937_64 rng(9);
  std::size_t differing = 0;
  for (int i = 0; i < 50; ++i) {
    const auto t = random_trace(rng, fmt::format("l{}", i));
    std::set<std::size_t> all;
    for (std::size_t m = 0; m < t.segment_count(); ++m) all.insert(m);
    const auto mask = build_loss_mask(t, all);
    if (compute_loss(model, t, &mask) != compute_loss(model, t)) ++differing;
  }
  const auto zeroed = ReferenceModel::zeroed(ModelDims{});
  std::mt19937_64 rng2(10);
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    worst = std::max(worst, std::abs(compute_loss(zeroed, random_trace(rng2, "z")) - std::log(260.0)));
  }
  return {differing == 0 && worst <= 1e-12,
          fmt::format("{} of 50 traces differ bitwise; zeroed-model |loss - ln V| = {:.2e}", differing, worst)};
}

Verdict monotonicity() {
  std::mt19937_64 rng(31);
  const std::vector<double> taus = {0.1, 0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 1.0};
  const std::vector<double> betas = {0.0, 0.2, 0.5, 0.8, 0.95, 1.0};
  std::size_t violations = 0;
  auto subset = [](const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
  };
  for (int v = 0; v < 200; ++v) {
    const auto r = random_scores(rng, 12);
    const auto s = scores_for(r);
    for (bool boundaries : {false, true}) {
      std::vector<std::vector<std::set<std::size_t>>> grid;
      for (double tau : taus) {
        grid.emplace_back();
        for (double beta : betas) grid.back().push_back(select_important(s, r.trace.segments, {tau, beta, boundaries}).important);
      }
      for (std::size_t i = 0; i < taus.size(); ++i) {
        for (std::size_t j = 0; j < betas.size(); ++j) {
          if (i + 1 < taus.size() && !subset(grid[i][j], grid[i + 1][j])) ++violations;
          if (j + 1 < betas.size() && !subset(grid[i][j], grid[i][j + 1])) ++violations;
        }
      }
    }
  }
  return {violations == 0, fmt::format("{} inclusion violations over 200 score vectors", violations)};
}

Verdict synthetic_end_to_end() {
  const fs::path dir = scratch_dir("synthetic");
  SyntheticConfig sc;
  sc.traces = 200;
  const auto corpus = generate_synthetic(sc, ByteTokenizer());
  std::vector<ReasoningTrace> injected, clean;
  for (const auto& s : corpus) {
    injected.push_back(s.trace);
    clean.push_back(s.clean);
  }
  save_traces(dir / "corpus.ndjson", injected);
  save_traces(dir / "clean.ndjson", clean);

  RunConfig cfg;
  cfg.corpus = dir / "corpus.ndjson";
  cfg.train_corpus = dir / "clean.ndjson";
  cfg.out_dir = dir / "out";
  cfg.selection = {0.7, 0.8, true};
  for (auto stage : {Stage::segment, Stage::attribute, Stage::score, Stage::select, Stage::mask, Stage::analyze,
                     Stage::report}) {
    run_stage(stage, cfg);
  }

  std::ifstream sin(cfg.out_dir / "selection.ndjson");
  const auto selections = read_selections(sin);
  std::map<std::pair<std::string, std::size_t>, double> bleu;
  {
    std::ifstream in(cfg.out_dir / "segment_stats.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
      bleu[{cells[0], std::stoul(cells[1])}] = std::stod(cells[5]);
    }
  }
  std::size_t repeats = 0, unimportant = 0;
  std::vector<double> repeat_bleu;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus[i];
    for (std::size_t m = 0; m < s.kinds.size(); ++m) {
      if (s.kinds[m] != SegmentKind::repeat) continue;
      ++repeats;
      unimportant += !selections[i].important.contains(m);
      repeat_bleu.push_back(bleu.at({s.trace.trace_id, m}));
    }
  }
  std::sort(repeat_bleu.begin(), repeat_bleu.end());
  const std::size_t n = repeat_bleu.size();
  const double median = n == 0 ? 0.0 : (n % 2 ? repeat_bleu[n / 2] : (repeat_bleu[n / 2 - 1] + repeat_bleu[n / 2]) / 2);

  std::vector<double> cdf;
  {
    std::ifstream in(cfg.out_dir / "cdf.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) cdf.push_back(std::stod(line.substr(line.find(',') + 1)));
  }
  bool monotone = !cdf.empty();
  for (std::size_t b = 1; b < cdf.size(); ++b) monotone = monotone && cdf[b] >= cdf[b - 1];
  const bool reaches_one = !cdf.empty() && std::abs(cdf.back() - 1.0) <= 1e-9;

  const double share = repeats == 0 ? 0.0 : static_cast<double>(unimportant) / static_cast<double>(repeats);
  fs::remove_all(dir);
  const bool a = share >= 0.80, b = median > 0.8, c = monotone && reaches_one;
  return {a && b && c,
          fmt::format("(a) {}/{} repeats unimportant = {:.3f} (>= 0.80) {}; (b) repeat BLEU median {:.3f} (> 0.8) {}; "
                      "(c) CDF monotone={} end={:.12f} {}",
                      unimportant, repeats, share, a ? "ok" : "MISSED", median, b ? "ok" : "MISSED", monotone,
                      cdf.empty() ? 0.0 : cdf.back(), c ? "ok" : "MISSED")};
}

Verdict format_determinism() {
  const fs::path dir = scratch_dir("determinism");
  if (run_cli("synth --out " + (dir / "syn").string() + " --traces 20 --seed 4") != 0) return {false, "synth failed"};
  const std::string flags = "--corpus " + (dir / "syn" / "corpus.ndjson").string() + " --train-corpus " +
                            (dir / "syn" / "clean.ndjson").string() + " --out " + (dir / "out").string() +
                            " --k-samples 4 --baselines first-correct,confidence-gain,ppl-removal,entropy,"
                            "random-segments,top-abs-ig-tokens,top-signed-ig-tokens,high-strength-only";
  if (run_cli("run " + flags) != 0) return {false, "first run failed"};
  const auto first = snapshot(dir / "out");
  const auto manifest = json::parse(first.at("manifest.json"));
  fs::remove_all(dir / "out");
  if (run_cli("run " + flags) != 0) return {false, "second run failed"};
  const auto second = snapshot(dir / "out");
  std::size_t differing = 0;
  for (const auto& [name, bytes] : first) differing += !second.contains(name) || second.at(name) != bytes;
  differing += second.size() != first.size();
  fs::remove_all(dir);
  return {differing == 0 && manifest["stages"].size() == std::size(kAllStages),
          fmt::format("{} artifacts compared, {} differ; manifest records {} stages", first.size(), differing,
                      manifest["stages"].size())};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"ig-quadrature", 1.0, ig_quadrature},
      {"ig-completeness", 120.0, ig_completeness},
      {"gradient-exactness", 60.0, gradient_exactness},
      {"selection-oracle", 30.0, selection_oracle},
      {"scale-invariance", 0.0, scale_invariance},
      {"loss-identity", 0.0, loss_identity},
      {"monotonicity", 0.0, monotonicity},
      {"synthetic-end-to-end", 300.0, synthetic_end_to_end},
      {"format-determinism", 0.0, format_determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, fmt::format("threw: {}", e.what())};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.budget_seconds == 0.0 || seconds < c.budget_seconds;
    const bool pass = v.pass && in_time;
    failures += !pass;
    const std::string budget = c.budget_seconds == 0.0 ? "" : fmt::format(" (< {:g} s)", c.budget_seconds);
    fmt::print("{} {}: {}; {:.2f} s{}{}\n", pass ? "PASS" : "FAIL", c.name, v.detail, seconds, budget,
               in_time ? "" : " OVER BUDGET");
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - static_cast<std::size_t>(failures), criteria.size());
  return failures;
}
