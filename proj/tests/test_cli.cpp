#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(HERDGATE_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

json read_json(const std::string& path) { return json::parse(testutil::slurp(path)); }

const char* kGenerateConfig = R"({
  "n_records": 400,
  "n_herds": 40,
  "n_practices": 6,
  "target_prevalence": 0.25,
  "effect_weights": {"moves_in_1y": 0.8, "badger_abundance": 0.5},
  "fraction_missing": {"badger_abundance": 0.1}
})";

const char* kWorldConfig = R"({
  "tiles": [{"id": "T0", "easting": 0, "northing": 0, "badger_density": 0.5}],
  "herds": [
    {"id": "h0", "tile": "T0", "area": "high_risk", "size": 30, "initial_i": 2},
    {"id": "h1", "tile": "T0", "area": "high_risk", "size": 25},
    {"id": "h2", "tile": "T0", "area": "edge", "size": 20}
  ],
  "movements": [{"src": "h1", "dst": "h2", "batches_per_day": 0.05, "batch_size": 2}]
})";

const char* kParamsConfig = R"({
  "beta_c": 0.03, "sigma": 0.02, "env_seed_cattle": 0.002, "env_decay": 0.05,
  "beta_env": 0.0005, "beta_env_badger": 0.0005,
  "test": {"se_t": 0.5, "se_i": 0.8, "sp": 0.998,
           "severe_se_t": 0.6, "severe_se_i": 0.9, "severe_sp": 0.99},
  "confirm_t": 0.5, "confirm_i": 0.9,
  "routine_interval_high_risk": 180, "routine_interval_edge": 120
})";

} // namespace

TEST_CASE("exit codes: usage errors are 2, validation errors are 1") {
    testutil::TempDir tmp;
    CHECK(run_cli("--definitely-not-a-flag") == 2);
    CHECK(run_cli("no_such_command") == 2);
    CHECK(run_cli("train") == 2);  // missing required flags
    CHECK(run_cli("train --config /nonexistent.json --out " + tmp.dir("x")) == 1);

    // Config with a bad field names the problem and exits 1.
    testutil::spit(tmp.file("bad.json"), R"({"n_records": 10, "n_herds": 50})");
    CHECK(run_cli("generate --config " + tmp.file("bad.json") + " --out " + tmp.dir("y")) == 1);
}

TEST_CASE("generate -> train -> eval pipeline produces a sane report") {
    testutil::TempDir tmp;
    testutil::spit(tmp.file("gen.json"), kGenerateConfig);
    REQUIRE(run_cli("generate --config " + tmp.file("gen.json") + " --out " + tmp.dir("data") +
                    " --seed 42") == 0);
    REQUIRE(fs::exists(tmp.dir("data") + "/dataset.csv"));
    REQUIRE(fs::exists(tmp.dir("data") + "/breakdowns.csv"));
    REQUIRE(fs::exists(tmp.dir("data") + "/manifest.json"));

    testutil::spit(tmp.file("train.json"), std::string(R"({"dataset": ")") +
                                               tmp.dir("data") + R"(/dataset.csv",
      "hyperparameters": {"n_iterations": 20, "max_leaf_nodes": 15}})");
    REQUIRE(run_cli("train --config " + tmp.file("train.json") + " --out " + tmp.dir("model") +
                    " --seed 42") == 0);
    REQUIRE(fs::exists(tmp.dir("model") + "/model.json"));

    testutil::spit(tmp.file("eval.json"), std::string(R"({"dataset": ")") + tmp.dir("data") +
                                              R"(/dataset.csv", "model": ")" + tmp.dir("model") +
                                              R"(/model.json", "threshold": 0.5})");
    REQUIRE(run_cli("eval --config " + tmp.file("eval.json") + " --out " + tmp.dir("eval") +
                    " --seed 42") == 0);
    const json summary = read_json(tmp.dir("eval") + "/summary.json");
    const double auc = summary.at("auc").get<double>();
    CHECK(auc >= 0.0);
    CHECK(auc <= 1.0);
    CHECK(fs::exists(tmp.dir("eval") + "/roc.csv"));
    CHECK(fs::exists(tmp.dir("eval") + "/roc_curve.csv"));
    CHECK(fs::exists(tmp.dir("eval") + "/yearly.csv"));

    // The output directory is never reused.
    CHECK(run_cli("eval --config " + tmp.file("eval.json") + " --out " + tmp.dir("eval")) == 1);
}

TEST_CASE("generate is deterministic per seed") {
    testutil::TempDir tmp;
    testutil::spit(tmp.file("gen.json"), kGenerateConfig);
    REQUIRE(run_cli("generate --config " + tmp.file("gen.json") + " --out " + tmp.dir("a") +
                    " --seed 7") == 0);
    REQUIRE(run_cli("generate --config " + tmp.file("gen.json") + " --out " + tmp.dir("b") +
                    " --seed 7") == 0);
    CHECK(testutil::slurp(tmp.dir("a") + "/dataset.csv") ==
          testutil::slurp(tmp.dir("b") + "/dataset.csv"));
    REQUIRE(run_cli("generate --config " + tmp.file("gen.json") + " --out " + tmp.dir("c") +
                    " --seed 8") == 0);
    CHECK(testutil::slurp(tmp.dir("a") + "/dataset.csv") !=
          testutil::slurp(tmp.dir("c") + "/dataset.csv"));
}

TEST_CASE("simulate runs and a one-point sweep matches it") {
    testutil::TempDir tmp;
    testutil::spit(tmp.file("world.json"), kWorldConfig);
    testutil::spit(tmp.file("params.json"), kParamsConfig);
    testutil::spit(tmp.file("sim.json"), std::string(R"({"world": ")") + tmp.file("world.json") +
                                             R"(", "params": ")" + tmp.file("params.json") +
                                             R"(", "years": 1, "replicates": 4})");
    REQUIRE(run_cli("simulate --config " + tmp.file("sim.json") + " --out " + tmp.dir("sim") +
                    " --seed 99 --threads 2") == 0);
    const json report = read_json(tmp.dir("sim") + "/report.json");

    testutil::spit(tmp.file("sweep.json"),
                   std::string(R"({"world": ")") + tmp.file("world.json") + R"(", "params": ")" +
                       tmp.file("params.json") +
                       R"(", "years": 1, "replicates": 4, "grid": [{"se_shift": 0, "sp_shift": 0}]})");
    REQUIRE(run_cli("sweep --config " + tmp.file("sweep.json") + " --out " + tmp.dir("sweep") +
                    " --seed 99 --threads 2") == 0);
    const json sweep = read_json(tmp.dir("sweep") + "/report.json");
    REQUIRE(sweep.at("points").size() == 1);
    const auto& point = sweep.at("points")[0];
    CHECK(point.at("annual_breakdowns_mean").get<double>() ==
          doctest::Approx(report.at("annual_breakdowns_mean").get<double>()));
    CHECK(point.at("annual_reactors_mean").get<double>() ==
          doctest::Approx(report.at("annual_reactors_mean").get<double>()));
    CHECK(point.at("hse").get<double>() == doctest::Approx(report.at("hse").get<double>()));
}

TEST_CASE("importance and practices commands emit their reports") {
    testutil::TempDir tmp;
    testutil::spit(tmp.file("gen.json"), kGenerateConfig);
    REQUIRE(run_cli("generate --config " + tmp.file("gen.json") + " --out " + tmp.dir("data") +
                    " --seed 3") == 0);
    testutil::spit(tmp.file("train.json"),
                   std::string(R"({"dataset": ")") + tmp.dir("data") +
                       R"(/dataset.csv", "control_feature": true,
                          "hyperparameters": {"n_iterations": 10, "max_leaf_nodes": 8}})");
    REQUIRE(run_cli("train --config " + tmp.file("train.json") + " --out " + tmp.dir("model") +
                    " --seed 3") == 0);

    testutil::spit(tmp.file("imp.json"), std::string(R"({"dataset": ")") + tmp.dir("data") +
                                             R"(/dataset.csv", "model": ")" + tmp.dir("model") +
                                             R"(/model.json", "n_repeats": 3})");
    REQUIRE(run_cli("importance --config " + tmp.file("imp.json") + " --out " + tmp.dir("imp") +
                    " --seed 3 --threads 2") == 0);
    const std::string imp_csv = testutil::slurp(tmp.dir("imp") + "/importance.csv");
    CHECK(imp_csv.find("control") != std::string::npos);
    CHECK(imp_csv.find("sicct_herd_result") != std::string::npos);

    testutil::spit(tmp.file("prac.json"), std::string(R"({"dataset": ")") + tmp.dir("data") +
                                              R"(/dataset.csv", "model": ")" + tmp.dir("model") +
                                              R"(/model.json"})");
    REQUIRE(run_cli("practices --config " + tmp.file("prac.json") + " --out " + tmp.dir("prac") +
                    " --seed 3") == 0);
    const json summary = read_json(tmp.dir("prac") + "/summary.json");
    CHECK(summary.at("n_practices").get<int>() == 6);
}

TEST_CASE("tune command selects a configuration and saves the final model") {
    testutil::TempDir tmp;
    testutil::spit(tmp.file("gen.json"), kGenerateConfig);
    REQUIRE(run_cli("generate --config " + tmp.file("gen.json") + " --out " + tmp.dir("data") +
                    " --seed 5") == 0);
    testutil::spit(tmp.file("tune.json"),
                   std::string(R"({"dataset": ")") + tmp.dir("data") + R"(/dataset.csv",
      "search": {"n_configs": 2, "n_splits": 2, "max_leaf_nodes": [2, 32]},
      "base_hyperparameters": {"n_iterations": 8}})");
    REQUIRE(run_cli("tune --config " + tmp.file("tune.json") + " --out " + tmp.dir("tune") +
                    " --seed 5 --threads 2") == 0);
    REQUIRE(fs::exists(tmp.dir("tune") + "/model.json"));
    REQUIRE(fs::exists(tmp.dir("tune") + "/search_log.csv"));
    const json best = read_json(tmp.dir("tune") + "/best_config.json");
    CHECK(best.at("mean_metric").get<double>() > 0.5);

    // Four trial rows plus the header.
    const std::string log = testutil::slurp(tmp.dir("tune") + "/search_log.csv");
    CHECK(std::count(log.begin(), log.end(), '\n') == 5);
}

TEST_CASE("fit command recovers a parameter on a tiny world") {
    testutil::TempDir tmp;
    testutil::spit(tmp.file("world.json"), kWorldConfig);
    testutil::spit(tmp.file("params.json"), kParamsConfig);
    testutil::spit(tmp.file("fit.json"),
                   std::string(R"({"world": ")") + tmp.file("world.json") + R"(", "params": ")" +
                       tmp.file("params.json") + R"(",
      "fit_parameters": [{"name": "se_i", "lo": 0.2, "hi": 1.0}],
      "target_from_base": {"years": 1, "replicates": 3},
      "abc": {"n_particles": 12, "n_generations": 2, "max_simulator_calls": 400},
      "sim_years": 1, "replicates_per_eval": 1})");
    REQUIRE(run_cli("fit --config " + tmp.file("fit.json") + " --out " + tmp.dir("fit") +
                    " --seed 13 --threads 4") == 0);
    const json summary = read_json(tmp.dir("fit") + "/posterior_summary.json");
    CHECK(summary.at("n_generations_completed").get<int>() >= 1);
    const double mean = summary.at("posterior").at("se_i").at("mean").get<double>();
    CHECK(mean >= 0.2);
    CHECK(mean <= 1.0);
    REQUIRE(fs::exists(tmp.dir("fit") + "/populations.csv"));
}
