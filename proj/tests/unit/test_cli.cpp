#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "commands.hpp"
#include "support.hpp"

using namespace devsurv;
using devsurv::testing::TempDir;
using devsurv::testing::read_file;
using devsurv::testing::write_file;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "devsurv");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string config(const TempDir& dir, nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json j{{"output_dir", "out"},
                   {"data_dir", testing::data_dir().string()},
                   {"paths",
                    {{"notes", "out/synth/notes.jsonl"},
                     {"gold", "out/synth/gold_relations.csv"},
                     {"registry", "out/synth/registry.csv"},
                     {"patients", "out/synth/patients.csv"},
                     {"codes", "out/synth/codes.csv"}}},
                   {"pipeline", {{"covariates", {{"race", false}, {"ethnicity", false}}}}},
                   {"synth", {{"seed", 7}, {"n_patients", 300}}}};
  j.merge_patch(extra);
  const auto path = dir / "project.json";
  write_file(path, j.dump(2));
  return path.string();
}

}  // namespace

TEST_CASE("cli: synthetic corpus through the full pipeline, twice") {
  TempDir dir("cli");
  const auto cfg = config(dir);
  REQUIRE(invoke({"-c", cfg, "synth", "gen"}).code == 0);
  const auto first = invoke({"-c", cfg, "run"});
  INFO(first.err);
  REQUIRE(first.code == 0);
  const auto metrics = read_file(dir / "out" / "metrics_pain_anatomy.csv");
  CHECK(metrics.rfind("method,precision,recall,f1", 0) == 0);
  CHECK(metrics.find("\nclassifier,") != std::string::npos);
  CHECK(metrics.find("\nsmv,") != std::string::npos);
  REQUIRE(invoke({"-c", cfg, "regression", "nb"}).code == 0);
  REQUIRE(invoke({"-c", cfg, "ttest"}).code == 0);
  for (const char* f : {"cox.json", "forest.csv", "events.csv", "reconcile_summary.json", "nb.json", "ttest.json"})
    CHECK_MESSAGE(std::filesystem::exists(dir / "out" / f), f);

  const auto scores = read_file(dir / "out" / "scores_pain_anatomy.csv");
  REQUIRE(invoke({"-c", cfg, "run"}).code == 0);
  CHECK(read_file(dir / "out" / "metrics_pain_anatomy.csv") == metrics);
  CHECK(read_file(dir / "out" / "scores_pain_anatomy.csv") == scores);

  const auto forest = read_file(dir / "out" / "forest.csv");
  CHECK(forest.rfind("system,n_patients,n_events,person_years,HR,CI_low,CI_high,p", 0) == 0);
  REQUIRE(invoke({"-c", cfg, "report", "forest"}).code == 0);
  CHECK(read_file(dir / "out" / "forest.csv") == forest);
}

TEST_CASE("cli: lf stats, with and without gold") {
  TempDir dir("cli");
  write_file(dir / "lfs.json",
             R"([{"starter": "contiguous_entities"}, {"starter": "historical"}, {"starter": "reject_section"}])");
  auto cfg = config(dir, {{"paths", {{"lfs_pain_anatomy", "lfs.json"}}}});
  REQUIRE(invoke({"-c", cfg, "synth", "gen"}).code == 0);
  for (const char* step : {"ingest", "tag", "candidates"}) REQUIRE(invoke({"-c", cfg, step}).code == 0);
  REQUIRE(invoke({"-c", cfg, "lf", "apply"}).code == 0);
  auto r = invoke({"-c", cfg, "lf", "stats", "--dev"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto dev = read_file(dir / "out" / "lf_dev_pain_anatomy.csv");
  std::istringstream lines(dev);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "lf_id,coverage,votes,accuracy");
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    const auto cov = std::stod(line.substr(line.find(',') + 1));
    CHECK_MESSAGE(cov > 0, line);
  }
  CHECK(rows == 3);

  cfg = config(dir, {{"paths", {{"lfs_pain_anatomy", "lfs.json"}, {"gold", nullptr}}}});
  REQUIRE(invoke({"-c", cfg, "lf", "stats"}).code == 0);
  const auto stats = read_file(dir / "out" / "lf_stats_pain_anatomy.csv");
  CHECK(stats.rfind("lf_id,coverage,overlap,conflict\n", 0) == 0);
}

TEST_CASE("cli: error statuses") {
  TempDir dir("cli");
  auto cfg = config(dir);

  auto r = invoke({"-c", cfg, "ingest"});
  CHECK(r.code == cli::kExitMissingInput);
  CHECK(r.err.find("notes.jsonl") != std::string::npos);
  CHECK(nlohmann::json::parse(r.err.substr(r.err.find('{'))).at("code") == "missing_input");

  r = invoke({"-c", cfg, "frobnicate"});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("frobnicate") != std::string::npos);
  CHECK(invoke({"-c", cfg}).code == cli::kExitUsage);
  CHECK(invoke({"-c", cfg, "-r", "bogus", "ingest"}).code == cli::kExitUsage);

  r = invoke({"-c", (dir / "none.json").string(), "ingest"});
  CHECK(r.code == cli::kExitMissingInput);

  write_file(dir / "bad.json", R"({"output_dir": "out", "colour": 1})");
  r = invoke({"-c", (dir / "bad.json").string(), "ingest"});
  CHECK(r.code == cli::kExitInvalidConfig);
  CHECK(r.err.find("colour") != std::string::npos);

  REQUIRE(invoke({"-c", cfg, "synth", "gen"}).code == 0);
  r = invoke({"-c", cfg, "train"});
  CHECK(r.code == cli::kExitMissingInput);
  CHECK(r.err.find("candidates") != std::string::npos);

  write_file(dir / "empty.json", "[]");
  cfg = config(dir, {{"paths", {{"lfs_pain_anatomy", "empty.json"}}}});
  for (const char* step : {"ingest", "tag", "candidates"}) REQUIRE(invoke({"-c", cfg, step}).code == 0);
  CHECK(invoke({"-c", cfg, "lf", "apply"}).code == cli::kExitInvalidConfig);

  write_file(dir / "out" / ".devsurv.lock", "");
  r = invoke({"-c", cfg, "ingest"});
  CHECK(r.code == cli::kExitLocked);
  CHECK(std::filesystem::exists(dir / "out" / ".devsurv.lock"));
}

TEST_CASE("cli: help exits cleanly") {
  const auto r = invoke({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("survival") != std::string::npos);
}
