#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

#include "cotig/error.hpp"
#include "cotig/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cotig;
using nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Workspace {
 public:
  Workspace() : root_(fs::temp_directory_path() / ("cotig-pipeline-" + std::to_string(::getpid()))) {
    fs::remove_all(root_);
    fs::create_directories(root_);
    REQUIRE(cli("synth --out " + (root_ / "syn").string() + " --traces 6 --seed 2").code == 0);
  }
  ~Workspace() { fs::remove_all(root_); }

  Outcome cli(const std::string& args) const {
    const fs::path err = root_ / "stderr.txt";
    const std::string cmd = std::string(COTIG_CLI) + " " + args + " 2> " + err.string() + " > /dev/null";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
  }

  /// Common flags for a small, quick run into `out`.
  std::string run_flags(const std::string& out) const {
    return "--corpus " + (root_ / "syn" / "corpus.ndjson").string() + " --out " + (root_ / out).string() +
           " --train-steps 20 --steps 8";
  }

  fs::path dir(const std::string& out) const { return root_ / out; }

 private:
  fs::path root_;
};

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = slurp(e.path());
  return files;
}

}  // namespace

TEST_CASE("stage order violations name the missing producer") {
  Workspace ws;
  const auto r = ws.cli("mask " + ws.run_flags("o"));
  CHECK(r.code == 3);
  CHECK(r.err.find("run the 'select' stage first") != std::string::npos);
  CHECK(ws.cli("segment " + ws.run_flags("o")).code == 0);
  CHECK(ws.cli("score " + ws.run_flags("o")).err.find("'attribute'") != std::string::npos);
}

TEST_CASE("usage errors exit with 2") {
  Workspace ws;
  CHECK(ws.cli("frobnicate").code == 2);
  CHECK(ws.cli("segment --tau").code == 2);
  CHECK(ws.cli("attribute --dump x.ndjson --steps 5 --out " + ws.dir("o").string()).code == 2);
  CHECK(ws.cli("segment --keywords k.txt --keyword-profile paper-main --out " + ws.dir("o").string()).code == 2);
  CHECK(ws.cli("select --tau 1.5 " + ws.run_flags("o")).code == 2);
}

TEST_CASE("stages run one at a time and record their inputs") {
  Workspace ws;
  const std::string flags = ws.run_flags("o");
  for (const char* stage : {"segment", "attribute", "score"}) REQUIRE(ws.cli(std::string(stage) + " " + flags).code == 0);
  REQUIRE(ws.cli("select --tau 0.7 --beta 0.8 " + flags).code == 0);

  std::ifstream sel(ws.dir("o") / "selection.ndjson");
  std::string line;
  REQUIRE(std::getline(sel, line));
  const auto rec = json::parse(line);
  CHECK(rec["policy"]["tau"] == 0.7);
  CHECK(rec["policy"]["beta"] == 0.8);
  CHECK(rec["method"] == "ig");

  std::ifstream attr(ws.dir("o") / "attributions.ndjson");
  REQUIRE(std::getline(attr, line));
  CHECK(json::parse(line)["steps"] == 8);

  const auto manifest = json::parse(slurp(ws.dir("o") / "manifest.json"));
  CHECK(manifest["tool_version"] == std::string(kToolVersion));
  CHECK(manifest["stages"]["select"]["inputs"].contains("scores.csv"));
  CHECK(manifest["stages"]["select"]["outputs"].contains("selection.ndjson"));
  CHECK_FALSE(manifest["stages"].contains("mask"));
  CHECK_FALSE(fs::exists(ws.dir("o") / "masks.ndjson"));

  REQUIRE(ws.cli("mask " + flags).code == 0);
  std::ifstream masks(ws.dir("o") / "masks.ndjson");
  REQUIRE(std::getline(masks, line));
  CHECK(json::parse(line).contains("ones"));
}

TEST_CASE("a rerun reproduces every artifact byte for byte") {
  Workspace ws;
  const std::string flags = ws.run_flags("o") + " --baselines first-correct,random-segments";
  REQUIRE(ws.cli("run " + flags).code == 0);
  const auto first = snapshot(ws.dir("o"));
  CHECK(first.contains("summary.csv"));
  CHECK(first.contains("baseline_random-segments_masks.ndjson"));
  fs::remove_all(ws.dir("o"));
  REQUIRE(ws.cli("run " + flags).code == 0);
  CHECK(snapshot(ws.dir("o")) == first);
}

TEST_CASE("external dumps replace attribution") {
  Workspace ws;
  REQUIRE(ws.cli("run " + ws.run_flags("a")).code == 0);
  const std::string dump = (ws.dir("a") / "attributions.ndjson").string();
  const std::string corpus = (ws.dir("a") / "../syn/corpus.ndjson").string();
  const std::string b = ws.dir("b").string();
  REQUIRE(ws.cli("segment --corpus " + corpus + " --out " + b).code == 0);
  REQUIRE(ws.cli("attribute --corpus " + corpus + " --out " + b + " --dump " + dump).code == 0);
  REQUIRE(ws.cli("score --corpus " + corpus + " --out " + b).code == 0);
  CHECK(slurp(ws.dir("a") / "scores.csv") == slurp(ws.dir("b") / "scores.csv"));
}

TEST_CASE("config files round trip") {
  RunConfig cfg;
  cfg.selection.tau = 0.6;
  cfg.baselines = {BaselineMethod::entropy};
  cfg.model.train_steps = 7;
  const auto back = RunConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK_THROWS_AS(RunConfig::from_json(json{{"bogus", 1}}), Error);
  CHECK(parse_stage("mask") == Stage::mask);
  CHECK_THROWS_AS(parse_stage("train"), Error);
}

TEST_CASE("parallel_for rethrows the lowest failing index") {
  std::vector<int> hit(20, 0);
  parallel_for(20, 3, [&](std::size_t i) { hit[i] = 1; });
  CHECK(std::count(hit.begin(), hit.end(), 1) == 20);
  try {
    parallel_for(20, 4, [](std::size_t i) {
      if (i == 5 || i == 13) throw Error(ErrorKind::domain, std::to_string(i));
    });
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.detail() == "5");
  }
}
