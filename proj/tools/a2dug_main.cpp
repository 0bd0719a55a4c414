// a2dug experiment pipeline.
//
// Subcommands: synth, precompute, train, ablate, hpo, selftest.
// Options come from flags and/or a JSON config file (--config); flags win
// over config values, and unknown config keys are rejected. Exit codes:
// 0 success, 1 IO failure, 2 invalid configuration, 3 numerical failure,
// 4 selftest failure.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "a2dug/common.hpp"
#include "a2dug/data.hpp"
#include "a2dug/io_util.hpp"
#include "a2dug/model.hpp"
#include "a2dug/precompute.hpp"
#include "a2dug/selftest.hpp"
#include "a2dug/sparse.hpp"
#include "a2dug/train.hpp"

namespace {

using namespace a2dug;

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerics = 3;
constexpr int kExitSelftest = 4;

// One config-file-overridable option: the CLI option handle plus a setter
// that applies a JSON value.
struct ConfigKey {
  CLI::Option* opt = nullptr;
  std::function<void(const json&)> set;
};

using ConfigTable = std::map<std::string, ConfigKey>;

// Applies config-file values for keys whose flags were not passed; any key
// not present in the table is rejected.
void apply_config(const std::string& config_path, const ConfigTable& table) {
  if (config_path.empty()) return;
  const json cfg = read_json_file(config_path);
  if (!cfg.is_object()) throw ParamError("config file must hold a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    const auto it = table.find(key);
    if (it == table.end()) throw ParamError("unknown config key '" + key + "'");
    if (it->second.opt != nullptr && it->second.opt->count() > 0) continue;  // flag wins
    try {
      it->second.set(value);
    } catch (const json::exception& e) {
      throw ParamError("config key '" + key + "': " + e.what());
    }
  }
}

// --- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string kind, out, config;
  std::uint64_t seed = 0;
  long long n = 500;
  double avg_out_degree = 5.0;
  long long noise_dim = 8;
  int blocks = 2;
  double p_in = 0.02, p_out = 0.001;
  double feature_noise = 1.0;
};

void require_set(const std::string& value, const char* what);

void run_synth(const SynthArgs& a) {
  require_set(a.kind, "--kind");
  require_set(a.out, "--out");
  Dataset ds;
  if (a.kind == "directional") {
    ds = gen_directional(Index(a.n), a.avg_out_degree, Index(a.noise_dim), a.seed);
  } else if (a.kind == "homophilous") {
    ds = gen_homophilous(Index(a.n), a.blocks, a.p_in, a.p_out, a.feature_noise, a.seed);
  } else if (a.kind == "collision") {
    ds = gen_collision_fixture(a.seed).first;
  } else {
    throw ParamError("unknown synth kind '" + a.kind + "' (directional|homophilous|collision)");
  }
  save_dataset(a.out, ds);
  std::printf("synth %s: n=%lld edges=%lld classes=%lld -> %s\n", ds.name.c_str(),
              (long long)ds.a.rows, (long long)ds.a.nnz(), (long long)ds.num_classes,
              a.out.c_str());
}

// --- precompute -------------------------------------------------------

struct PrecomputeArgs {
  std::string dataset, out, config;
  int k = 2;
  long long block_cols = 0;  // 0 = whole feature width at once
};

void run_precompute(const PrecomputeArgs& a) {
  require_set(a.dataset, "--dataset");
  require_set(a.out, "--out");
  const Dataset ds = load_dataset(a.dataset);
  const auto t0 = std::chrono::steady_clock::now();
  std::optional<Index> block;
  if (a.block_cols > 0) block = Index(a.block_cols);
  const auto bundle = precompute_all<float>(ds.a, ds.x.cast<double>(), a.k, block);
  save_bundle(a.out, bundle);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("precompute k=%d: %zu channels in %.3f s -> %s\n", a.k, bundle.channels.size(),
              secs, a.out.c_str());
}

// --- shared train-style options ------------------------------------------

struct TrainArgs {
  std::string dataset, bundle, out, config;
  std::string splits_file;
  int split_index = 0;
  TrainConfig cfg;
  std::string metric = "accuracy";
  int k = 0;  // 0 = use the bundle's k
};

// Registers the TrainConfig-ish flags shared by train/ablate/hpo and fills
// the config table for them.
void add_train_options(CLI::App* sub, TrainArgs& a, ConfigTable& table) {
  auto opt = [&](const char* flag, auto& var, const char* help) {
    return sub->add_option(flag, var, help);
  };
  table["dataset"] = {opt("--dataset", a.dataset, "dataset directory"),
                      [&a](const json& v) { a.dataset = v.get<std::string>(); }};
  table["bundle"] = {opt("--bundle", a.bundle, "precomputed feature bundle directory"),
                     [&a](const json& v) { a.bundle = v.get<std::string>(); }};
  table["out"] = {opt("--out", a.out, "output directory"),
                  [&a](const json& v) { a.out = v.get<std::string>(); }};
  table["splits"] = {opt("--splits", a.splits_file, "splits.json (generated when absent)"),
                     [&a](const json& v) { a.splits_file = v.get<std::string>(); }};
  table["split_index"] = {opt("--split-index", a.split_index, "which split to train on"),
                          [&a](const json& v) { a.split_index = v.get<int>(); }};
  table["lr"] = {opt("--lr", a.cfg.lr, "learning rate"),
                 [&a](const json& v) { a.cfg.lr = v.get<double>(); }};
  table["weight_decay"] = {opt("--weight-decay", a.cfg.weight_decay, "decoupled weight decay"),
                           [&a](const json& v) { a.cfg.weight_decay = v.get<double>(); }};
  table["hidden"] = {opt("--hidden", a.cfg.hyper.hidden, "hidden width"),
                     [&a](const json& v) { a.cfg.hyper.hidden = v.get<Index>(); }};
  table["k"] = {opt("--k", a.k, "hops to use (0 = bundle's k)"),
                [&a](const json& v) { a.k = v.get<int>(); }};
  table["depth_feat"] = {opt("--depth-feat", a.cfg.hyper.depth_feat, "feature MLP depth"),
                         [&a](const json& v) { a.cfg.hyper.depth_feat = v.get<int>(); }};
  table["depth_adj"] = {opt("--depth-adj", a.cfg.hyper.depth_adj, "adjacency MLP depth"),
                        [&a](const json& v) { a.cfg.hyper.depth_adj = v.get<int>(); }};
  table["depth_agg"] = {opt("--depth-agg", a.cfg.hyper.depth_agg, "aggregation MLP depth"),
                        [&a](const json& v) { a.cfg.hyper.depth_agg = v.get<int>(); }};
  table["depth_final"] = {opt("--depth-final", a.cfg.hyper.depth_final, "final MLP depth"),
                          [&a](const json& v) { a.cfg.hyper.depth_final = v.get<int>(); }};
  table["dropout"] = {opt("--dropout", a.cfg.hyper.dropout, "dropout rate"),
                      [&a](const json& v) { a.cfg.hyper.dropout = v.get<double>(); }};
  table["max_epochs"] = {opt("--max-epochs", a.cfg.max_epochs, "epoch budget"),
                         [&a](const json& v) { a.cfg.max_epochs = v.get<int>(); }};
  table["patience"] = {opt("--patience", a.cfg.patience, "early-stopping patience"),
                       [&a](const json& v) { a.cfg.patience = v.get<int>(); }};
  table["num_batches"] = {opt("--num-batches", a.cfg.num_batches, "minibatches per epoch"),
                          [&a](const json& v) { a.cfg.num_batches = v.get<int>(); }};
  table["seed"] = {opt("--seed", a.cfg.seed, "RNG seed"),
                   [&a](const json& v) { a.cfg.seed = v.get<std::uint64_t>(); }};
  table["variant"] = {opt("--variant", a.cfg.variant, "branch mask variant"),
                      [&a](const json& v) { a.cfg.variant = v.get<std::string>(); }};
  table["metric"] = {opt("--metric", a.metric, "accuracy|roc_auc"),
                     [&a](const json& v) { a.metric = v.get<std::string>(); }};
}

// Loads dataset + bundle, builds (optionally hop-narrowed) model inputs, and
// finalizes the TrainConfig.
struct LoadedExperiment {
  Dataset ds;
  ModelInputs<float> inputs;
  TrainConfig cfg;
};

void require_set(const std::string& value, const char* what) {
  if (value.empty()) throw ParamError(std::string("missing required option: ") + what);
}

LoadedExperiment load_experiment(TrainArgs& a) {
  require_set(a.dataset, "--dataset");
  require_set(a.bundle, "--bundle");
  require_set(a.out, "--out");
  LoadedExperiment e;
  e.ds = load_dataset(a.dataset);
  const FeatureBundle<float> bundle = load_bundle(a.bundle);
  e.inputs = make_model_inputs(e.ds.a, bundle);
  if (a.k > 0 && a.k != e.inputs.k) e.inputs = narrow_inputs(e.inputs, a.k);
  e.cfg = a.cfg;
  e.cfg.hyper.k = e.inputs.k;
  e.cfg.metric = parse_metric(a.metric);
  return e;
}

SplitSet obtain_splits(const TrainArgs& a, Index n, int count, std::uint64_t seed) {
  if (!a.splits_file.empty()) return load_splits(a.splits_file);
  return make_random_splits(n, {0.5, 0.25, 0.25}, count, seed);
}

// --- train ----------------------------------------------------------------

void run_train(TrainArgs& a) {
  LoadedExperiment e = load_experiment(a);
  const SplitSet splits = obtain_splits(a, e.inputs.n, a.split_index + 1, e.cfg.seed);
  if (a.split_index < 0 || std::size_t(a.split_index) >= splits.size())
    throw ParamError("split index " + std::to_string(a.split_index) + " outside " +
                     std::to_string(splits.size()) + " splits");
  fs::create_directories(a.out);
  save_splits(fs::path(a.out) / "splits.json", splits);

  const auto [params, report] =
      train(e.inputs, e.ds.labels, e.ds.num_classes, splits[std::size_t(a.split_index)], e.cfg);
  write_json_file(fs::path(a.out) / "report.json", report_json(report));
  write_json_file(fs::path(a.out) / "timings.json", timing_json(report));
  save_checkpoint(fs::path(a.out) / "checkpoint", params);
  std::printf("train %s on %s: best_val=%.4f at epoch %d/%d, test_%s=%.4f -> %s\n",
              e.cfg.variant.c_str(), e.ds.name.c_str(), report.best_val, report.best_epoch,
              report.epochs_run, metric_name(e.cfg.metric).c_str(), report.test_metric,
              a.out.c_str());
}

// --- ablate -----------------------------------------------------------

void run_ablate(TrainArgs& a, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ParamError("ablate: need at least one seed");
  LoadedExperiment e = load_experiment(a);
  const SplitSet splits = obtain_splits(a, e.inputs.n, int(seeds.size()), e.cfg.seed);
  fs::create_directories(a.out);
  save_splits(fs::path(a.out) / "splits.json", splits);

  const AblationTable table =
      run_ablation(e.inputs, e.ds.labels, e.ds.num_classes, splits, e.cfg, seeds);
  write_json_file(fs::path(a.out) / "ablation.json", ablation_json(table));
  const std::string text = ablation_text(table);
  write_text_file(fs::path(a.out) / "ablation.txt", text);
  std::printf("ablate %s over %zu seeds:\n%s", e.ds.name.c_str(), seeds.size(), text.c_str());
}

// --- hpo --------------------------------------------------------------

void run_hpo(TrainArgs& a, int trials, int jobs, const HpoSpace& space) {
  LoadedExperiment e = load_experiment(a);
  const SplitSet splits = obtain_splits(a, e.inputs.n, a.split_index + 1, e.cfg.seed);
  if (a.split_index < 0 || std::size_t(a.split_index) >= splits.size())
    throw ParamError("split index " + std::to_string(a.split_index) + " outside " +
                     std::to_string(splits.size()) + " splits");
  fs::create_directories(a.out);
  save_splits(fs::path(a.out) / "splits.json", splits);

  const HpoResult res =
      random_search(space, trials, e.inputs, e.ds.labels, e.ds.num_classes,
                    splits[std::size_t(a.split_index)], e.cfg, e.cfg.seed, jobs);
  write_text_file(fs::path(a.out) / "trials.csv", hpo_trials_csv(res));
  const HpoTrial& best = res.trials[std::size_t(res.best_index)];
  write_json_file(fs::path(a.out) / "best.json",
                  json{{"trial", best.index},
                       {"val_metric", best.val_metric},
                       {"test_metric", best.test_metric},
                       {"config",
                        {{"lr", best.config.lr},
                         {"weight_decay", best.config.weight_decay},
                         {"hidden", best.config.hyper.hidden},
                         {"k", best.config.hyper.k},
                         {"depth_feat", best.config.hyper.depth_feat},
                         {"depth_adj", best.config.hyper.depth_adj},
                         {"depth_agg", best.config.hyper.depth_agg},
                         {"depth_final", best.config.hyper.depth_final},
                         {"dropout", best.config.hyper.dropout},
                         {"seed", best.config.seed}}}});
  std::printf("hpo: %d trials, best trial %d val=%.4f test=%.4f -> %s\n", trials, best.index,
              best.val_metric, best.test_metric, a.out.c_str());
}

// --- selftest ---------------------------------------------------------

int run_selftest(bool corrupt_gradient) {
  SelftestOptions opt;
  opt.corrupt_gradient = corrupt_gradient;
  const auto results = run_selftests(opt);
  bool all_passed = true;
  for (const auto& r : results) {
    std::printf("suite %-24s %s (%s)\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                r.detail.c_str());
    all_passed = all_passed && r.passed;
  }
  return all_passed ? kExitOk : kExitSelftest;
}

HpoSpace space_from_json(const json& js) {
  HpoSpace s;
  const std::map<std::string, std::function<void(const json&)>> keys = {
      {"lr", [&](const json& v) { s.lr = v.get<std::vector<double>>(); }},
      {"weight_decay", [&](const json& v) { s.weight_decay = v.get<std::vector<double>>(); }},
      {"hidden", [&](const json& v) { s.hidden = v.get<std::vector<Index>>(); }},
      {"k", [&](const json& v) { s.k = v.get<std::vector<int>>(); }},
      {"depth_feat", [&](const json& v) { s.depth_feat = v.get<std::vector<int>>(); }},
      {"depth_adj", [&](const json& v) { s.depth_adj = v.get<std::vector<int>>(); }},
      {"depth_agg", [&](const json& v) { s.depth_agg = v.get<std::vector<int>>(); }},
      {"depth_final", [&](const json& v) { s.depth_final = v.get<std::vector<int>>(); }},
      {"dropout", [&](const json& v) { s.dropout = v.get<std::vector<double>>(); }},
  };
  if (!js.is_object()) throw ParamError("'space' must be a JSON object of candidate lists");
  for (const auto& [key, value] : js.items()) {
    const auto it = keys.find(key);
    if (it == keys.end()) throw ParamError("unknown hpo space key '" + key + "'");
    it->second(value);
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"a2dug: adjacency + aggregated-feature node classification pipeline"};
  app.require_subcommand(1);

  SynthArgs synth;
  ConfigTable synth_table;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  {
    auto& t = synth_table;
    auto& a = synth;
    t["kind"] = {synth_cmd->add_option("--kind", a.kind, "directional|homophilous|collision"),
                 [&a](const json& v) { a.kind = v.get<std::string>(); }};
    t["out"] = {synth_cmd->add_option("--out", a.out, "output directory"),
                [&a](const json& v) { a.out = v.get<std::string>(); }};
    t["seed"] = {synth_cmd->add_option("--seed", a.seed, "RNG seed"),
                 [&a](const json& v) { a.seed = v.get<std::uint64_t>(); }};
    t["n"] = {synth_cmd->add_option("--n", a.n, "node count"),
              [&a](const json& v) { a.n = v.get<long long>(); }};
    t["avg_out_degree"] = {
        synth_cmd->add_option("--avg-out-degree", a.avg_out_degree, "directional mean degree"),
        [&a](const json& v) { a.avg_out_degree = v.get<double>(); }};
    t["noise_dim"] = {synth_cmd->add_option("--noise-dim", a.noise_dim, "noise feature count"),
                      [&a](const json& v) { a.noise_dim = v.get<long long>(); }};
    t["blocks"] = {synth_cmd->add_option("--blocks", a.blocks, "SBM block count"),
                   [&a](const json& v) { a.blocks = v.get<int>(); }};
    t["p_in"] = {synth_cmd->add_option("--p-in", a.p_in, "SBM intra-block edge prob"),
                 [&a](const json& v) { a.p_in = v.get<double>(); }};
    t["p_out"] = {synth_cmd->add_option("--p-out", a.p_out, "SBM inter-block edge prob"),
                  [&a](const json& v) { a.p_out = v.get<double>(); }};
    t["feature_noise"] = {
        synth_cmd->add_option("--feature-noise", a.feature_noise, "SBM feature noise scale"),
        [&a](const json& v) { a.feature_noise = v.get<double>(); }};
    synth_cmd->add_option("--config", a.config, "JSON config file");
  }

  PrecomputeArgs pre;
  ConfigTable pre_table;
  auto* pre_cmd = app.add_subcommand("precompute", "precompute the aggregated-feature bundle");
  {
    auto& t = pre_table;
    auto& a = pre;
    t["dataset"] = {pre_cmd->add_option("--dataset", a.dataset, "dataset directory"),
                    [&a](const json& v) { a.dataset = v.get<std::string>(); }};
    t["out"] = {pre_cmd->add_option("--out", a.out, "bundle output directory"),
                [&a](const json& v) { a.out = v.get<std::string>(); }};
    t["k"] = {pre_cmd->add_option("--k", a.k, "hop count"),
              [&a](const json& v) { a.k = v.get<int>(); }};
    t["block_cols"] = {
        pre_cmd->add_option("--block-cols", a.block_cols, "feature-column block width"),
        [&a](const json& v) { a.block_cols = v.get<long long>(); }};
    pre_cmd->add_option("--config", a.config, "JSON config file");
  }

  TrainArgs train_args;
  ConfigTable train_table;
  auto* train_cmd = app.add_subcommand("train", "train one variant on one split");
  add_train_options(train_cmd, train_args, train_table);
  train_cmd->add_option("--config", train_args.config, "JSON config file");

  TrainArgs ablate_args;
  ConfigTable ablate_table;
  std::vector<std::uint64_t> ablate_seeds = {0, 1, 2, 3, 4};
  auto* ablate_cmd = app.add_subcommand("ablate", "train all six variants over a seed list");
  add_train_options(ablate_cmd, ablate_args, ablate_table);
  ablate_table["seeds"] = {
      ablate_cmd->add_option("--seeds", ablate_seeds, "run seeds")->delimiter(','),
      [&ablate_seeds](const json& v) { ablate_seeds = v.get<std::vector<std::uint64_t>>(); }};
  ablate_cmd->add_option("--config", ablate_args.config, "JSON config file");

  TrainArgs hpo_args;
  ConfigTable hpo_table;
  int hpo_trials = 20;
  int hpo_jobs = 1;
  json hpo_space_json;
  auto* hpo_cmd = app.add_subcommand("hpo", "random-search hyperparameters");
  add_train_options(hpo_cmd, hpo_args, hpo_table);
  hpo_table["trials"] = {hpo_cmd->add_option("--trials", hpo_trials, "number of trials"),
                         [&hpo_trials](const json& v) { hpo_trials = v.get<int>(); }};
  hpo_table["jobs"] = {hpo_cmd->add_option("--jobs", hpo_jobs, "parallel trial workers"),
                       [&hpo_jobs](const json& v) { hpo_jobs = v.get<int>(); }};
  hpo_table["space"] = {nullptr, [&hpo_space_json](const json& v) { hpo_space_json = v; }};
  hpo_cmd->add_option("--config", hpo_args.config, "JSON config file");

  bool corrupt_gradient = false;
  auto* selftest_cmd = app.add_subcommand("selftest", "run built-in numerical suites");
  selftest_cmd->add_flag("--corrupt-gradient", corrupt_gradient,
                         "perturb one analytic gradient (detector check)");

  try {
    app.parse(argc, argv);
    if (synth_cmd->parsed()) {
      apply_config(synth.config, synth_table);
      run_synth(synth);
    } else if (pre_cmd->parsed()) {
      apply_config(pre.config, pre_table);
      run_precompute(pre);
    } else if (train_cmd->parsed()) {
      apply_config(train_args.config, train_table);
      run_train(train_args);
    } else if (ablate_cmd->parsed()) {
      apply_config(ablate_args.config, ablate_table);
      run_ablate(ablate_args, ablate_seeds);
    } else if (hpo_cmd->parsed()) {
      apply_config(hpo_args.config, hpo_table);
      const HpoSpace space =
          hpo_space_json.is_null() ? HpoSpace{} : space_from_json(hpo_space_json);
      run_hpo(hpo_args, hpo_trials, hpo_jobs, space);
    } else if (selftest_cmd->parsed()) {
      return run_selftest(corrupt_gradient);
    }
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return kExitIo;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumerics;
  } catch (const ParamError& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kExitConfig;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kExitConfig;
  } catch (const IndexError& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kExitConfig;
  } catch (const MetricError& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  }
}
