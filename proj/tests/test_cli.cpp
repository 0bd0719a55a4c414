// End-to-end tests driving the real CLI binary (path in $A2DUG_CLI).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kRoot = "cli_scratch";

std::string cli_path() {
  const char* p = std::getenv("A2DUG_CLI");
  REQUIRE_MESSAGE(p != nullptr, "A2DUG_CLI must point at the pipeline binary");
  return p;
}

// Runs `a2dug <args>`, captures stdout+stderr, returns the exit code.
int run_cli(const std::string& args, std::string* output = nullptr) {
  const fs::path log = kRoot / "last_run.log";
  const std::string cmd = cli_path() + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream f(log);
    std::stringstream ss;
    ss << f.rdbuf();
    *output = ss.str();
  }
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE_MESSAGE(f.good(), ("cannot read " + p.string()));
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json slurp_json(const fs::path& p) { return json::parse(slurp(p)); }

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

// Shared tiny dataset + bundle, built once through the CLI itself.
struct Workspace {
  fs::path dataset = kRoot / "ds";
  fs::path bundle = kRoot / "bundle";

  Workspace() {
    static bool ready = false;
    if (ready) return;
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    REQUIRE(run_cli("synth --kind directional --n 60 --avg-out-degree 3 --noise-dim 2 "
                    "--seed 7 --out " +
                    dataset.string()) == 0);
    REQUIRE(run_cli("precompute --dataset " + dataset.string() + " --k 2 --out " +
                    bundle.string()) == 0);
    ready = true;
  }

  std::string train_flags(const std::string& out, int max_epochs = 3) const {
    return "--dataset " + dataset.string() + " --bundle " + bundle.string() + " --out " + out +
           " --hidden 8 --max-epochs " + std::to_string(max_epochs) + " --seed 5";
  }
};

}  // namespace

TEST_CASE("synth writes a complete dataset directory, deterministically per seed") {
  Workspace ws;
  for (const char* f : {"edges.csv", "labels.csv", "features.bin", "features.json"})
    CHECK(fs::exists(ws.dataset / f));

  const fs::path again = kRoot / "ds_again";
  const fs::path other = kRoot / "ds_other";
  REQUIRE(run_cli("synth --kind directional --n 60 --avg-out-degree 3 --noise-dim 2 --seed 7 "
                  "--out " +
                  again.string()) == 0);
  REQUIRE(run_cli("synth --kind directional --n 60 --avg-out-degree 3 --noise-dim 2 --seed 8 "
                  "--out " +
                  other.string()) == 0);
  CHECK(slurp(again / "edges.csv") == slurp(ws.dataset / "edges.csv"));
  CHECK(slurp(again / "features.bin") == slurp(ws.dataset / "features.bin"));
  CHECK(slurp_json(again / "features.json").at("checksum") ==
        slurp_json(ws.dataset / "features.json").at("checksum"));
  CHECK(slurp_json(other / "features.json").at("checksum") !=
        slurp_json(ws.dataset / "features.json").at("checksum"));
}

TEST_CASE("synth validates its arguments") {
  Workspace ws;
  std::string out;
  CHECK(run_cli("synth --kind nosuch --out " + (kRoot / "x").string(), &out) == 2);
  CHECK(out.find("unknown synth kind") != std::string::npos);
  CHECK(run_cli("synth --out " + (kRoot / "x").string(), &out) == 2);
  CHECK(out.find("--kind") != std::string::npos);
  CHECK(run_cli("synth --kind homophilous --n 50 --p-in 0.01 --p-out 0.5 --out " +
                (kRoot / "x").string()) == 2);
}

TEST_CASE("precompute emits the full channel manifest; blocking changes nothing") {
  Workspace ws;
  const json manifest = slurp_json(ws.bundle / "manifest.json");
  CHECK(manifest.at("k") == 2);
  CHECK(manifest.at("channels").size() == 13);  // 6*2 + 1

  const fs::path blocked = kRoot / "bundle_blocked";
  REQUIRE(run_cli("precompute --dataset " + ws.dataset.string() + " --k 2 --block-cols 1 "
                  "--out " +
                  blocked.string()) == 0);
  const json m2 = slurp_json(blocked / "manifest.json");
  REQUIRE(m2.at("channels").size() == manifest.at("channels").size());
  for (std::size_t i = 0; i < manifest.at("channels").size(); ++i)
    CHECK(m2.at("channels")[i].at("checksum") == manifest.at("channels")[i].at("checksum"));

  SUBCASE("k = 3 yields 19 channels") {
    const fs::path k3 = kRoot / "bundle_k3";
    REQUIRE(run_cli("precompute --dataset " + ws.dataset.string() + " --k 3 --out " +
                    k3.string()) == 0);
    CHECK(slurp_json(k3 / "manifest.json").at("channels").size() == 19);
  }
  SUBCASE("missing dataset directory exits with the IO code") {
    CHECK(run_cli("precompute --dataset " + (kRoot / "nope").string() + " --out " +
                  (kRoot / "nope_out").string()) == 1);
  }
  SUBCASE("bad k exits with the config code") {
    CHECK(run_cli("precompute --dataset " + ws.dataset.string() + " --k 0 --out " +
                  (kRoot / "bad_k").string()) == 2);
  }
}

TEST_CASE("train writes report, timings, splits, and checkpoint; reruns are bitwise equal") {
  Workspace ws;
  const fs::path out1 = kRoot / "train1";
  const fs::path out2 = kRoot / "train2";
  std::string stdout1;
  REQUIRE(run_cli("train " + ws.train_flags(out1.string()), &stdout1) == 0);
  CHECK(stdout1.find("best_val") != std::string::npos);
  REQUIRE(run_cli("train " + ws.train_flags(out2.string())) == 0);

  for (const char* f : {"report.json", "timings.json", "splits.json"})
    CHECK(fs::exists(out1 / f));
  CHECK(fs::exists(out1 / "checkpoint" / "manifest.json"));

  const json report = slurp_json(out1 / "report.json");
  CHECK(report.at("variant") == "full");
  CHECK(report.at("metric") == "accuracy");
  CHECK(report.at("epochs_run") == 3);
  CHECK(report.at("test_metric_evaluations") == 1);
  CHECK(report.at("train_loss").size() == 3);

  // Determinism: identical bytes, checkpoint included; timings go elsewhere.
  CHECK(slurp(out1 / "report.json") == slurp(out2 / "report.json"));
  CHECK(slurp(out1 / "splits.json") == slurp(out2 / "splits.json"));
  CHECK(slurp(out1 / "checkpoint" / "manifest.json") ==
        slurp(out2 / "checkpoint" / "manifest.json"));
  CHECK(slurp(out1 / "checkpoint" / "final_L0_w.bin") ==
        slurp(out2 / "checkpoint" / "final_L0_w.bin"));
  CHECK(slurp(out1 / "checkpoint" / "feat_L0_w.bin") ==
        slurp(out2 / "checkpoint" / "feat_L0_w.bin"));
  CHECK_FALSE(report.contains("total_seconds"));
  CHECK(slurp_json(out1 / "timings.json").contains("total_seconds"));
}

TEST_CASE("config file values apply only where flags are absent") {
  Workspace ws;
  const fs::path cfg_file = kRoot / "train_cfg.json";
  write_text(cfg_file, R"({"max_epochs": 2, "variant": "wo_directed"})");

  const fs::path out_cfg = kRoot / "train_cfg_only";
  REQUIRE(run_cli("train --dataset " + ws.dataset.string() + " --bundle " +
                  ws.bundle.string() + " --out " + out_cfg.string() +
                  " --hidden 8 --seed 5 --config " + cfg_file.string()) == 0);
  const json r1 = slurp_json(out_cfg / "report.json");
  CHECK(r1.at("epochs_run") == 2);  // from the config file
  CHECK(r1.at("variant") == "wo_directed");

  const fs::path out_flag = kRoot / "train_flag_wins";
  REQUIRE(run_cli("train --dataset " + ws.dataset.string() + " --bundle " +
                  ws.bundle.string() + " --out " + out_flag.string() +
                  " --hidden 8 --seed 5 --max-epochs 1 --config " + cfg_file.string()) == 0);
  const json r2 = slurp_json(out_flag / "report.json");
  CHECK(r2.at("epochs_run") == 1);  // flag wins over config
  CHECK(r2.at("variant") == "wo_directed");

  SUBCASE("unknown config keys are rejected") {
    const fs::path bad = kRoot / "bad_cfg.json";
    write_text(bad, R"({"max_epochz": 2})");
    std::string out;
    CHECK(run_cli("train --dataset " + ws.dataset.string() + " --bundle " +
                      ws.bundle.string() + " --out " + (kRoot / "never").string() +
                      " --config " + bad.string(),
                  &out) == 2);
    CHECK(out.find("unknown config key") != std::string::npos);
    CHECK(out.find("max_epochz") != std::string::npos);
  }
  SUBCASE("missing required option is a config error") {
    std::string out;
    CHECK(run_cli("train --dataset " + ws.dataset.string() + " --bundle " +
                      ws.bundle.string(),
                  &out) == 2);
    CHECK(out.find("missing required option") != std::string::npos);
  }
  SUBCASE("unknown variant is a config error") {
    CHECK(run_cli("train " + ws.train_flags((kRoot / "never2").string()) +
                  " --variant bogus") == 2);
  }
  SUBCASE("missing bundle directory is an IO error") {
    CHECK(run_cli("train --dataset " + ws.dataset.string() + " --bundle " +
                  (kRoot / "no_bundle").string() + " --out " + (kRoot / "never3").string()) ==
          1);
  }
}

TEST_CASE("ablate produces the six-variant table") {
  Workspace ws;
  const fs::path out = kRoot / "ablate";
  REQUIRE(run_cli("ablate " + ws.train_flags(out.string(), 1) + " --seeds 0,1") == 0);
  const json table = slurp_json(out / "ablation.json");
  REQUIRE(table.at("rows").size() == 6);
  CHECK(table.at("rows")[0].at("variant") == "full");
  CHECK(table.at("rows")[5].at("variant") == "wo_transpose");
  CHECK(table.at("seeds").size() == 2);
  for (const auto& row : table.at("rows")) {
    CHECK(row.at("val_runs").size() == 2);
    CHECK(row.contains("test_mean"));
    CHECK(row.contains("test_std"));
  }
  const std::string text = slurp(out / "ablation.txt");
  CHECK(std::count(text.begin(), text.end(), '\n') == 7);
}

TEST_CASE("hpo writes one CSV row per trial plus the winning config") {
  Workspace ws;
  const fs::path out = kRoot / "hpo";
  const fs::path cfg_file = kRoot / "hpo_cfg.json";
  write_text(cfg_file, R"({
    "trials": 3,
    "space": {"lr": [0.001, 0.01], "weight_decay": [0.0], "hidden": [8], "k": [1, 2],
              "depth_feat": [1], "depth_adj": [1], "depth_agg": [1], "depth_final": [1],
              "dropout": [0.0]}
  })");
  REQUIRE(run_cli("hpo " + ws.train_flags(out.string(), 1) + " --config " +
                  cfg_file.string()) == 0);
  const std::string csv = slurp(out / "trials.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);  // header + 3 trials
  CHECK(csv.rfind("trial,lr,", 0) == 0);
  const json best = slurp_json(out / "best.json");
  CHECK(best.at("config").at("hidden") == 8);
  const double lr = best.at("config").at("lr").get<double>();
  CHECK((lr == 0.001 || lr == 0.01));

  SUBCASE("unknown space key is a config error") {
    const fs::path bad = kRoot / "hpo_bad.json";
    write_text(bad, R"({"space": {"learning_rate": [0.1]}})");
    std::string msg;
    CHECK(run_cli("hpo " + ws.train_flags((kRoot / "never4").string()) + " --config " +
                      bad.string(),
                  &msg) == 2);
    CHECK(msg.find("unknown hpo space key") != std::string::npos);
  }
}

TEST_CASE("selftest reports named suites and catches a seeded gradient fault") {
  Workspace ws;
  std::string out;
  CHECK(run_cli("selftest", &out) == 0);
  CHECK(out.find("suite gradient_check") != std::string::npos);
  CHECK(out.find("suite oracle_equivalence") != std::string::npos);
  CHECK(out.find("suite minibatch_equivalence") != std::string::npos);
  CHECK(out.find("FAIL") == std::string::npos);

  std::string corrupted;
  CHECK(run_cli("selftest --corrupt-gradient", &corrupted) == 4);
  CHECK(corrupted.find("FAIL") != std::string::npos);
}

TEST_CASE("bare invocation without a subcommand is a usage error") {
  Workspace ws;
  CHECK(run_cli("") == 2);
  CHECK(run_cli("frobnicate") == 2);
}
