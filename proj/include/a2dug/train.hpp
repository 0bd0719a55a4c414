// Training loop with row-wise minibatching, early stopping, ablation runs,
// and seeded uniform random-search HPO.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "a2dug/common.hpp"
#include "a2dug/data.hpp"
#include "a2dug/io_util.hpp"
#include "a2dug/metrics.hpp"
#include "a2dug/model.hpp"
#include "a2dug/nn.hpp"
#include "a2dug/precompute.hpp"
#include "a2dug/rng.hpp"

namespace a2dug {

enum class Metric { accuracy, roc_auc };

inline std::string metric_name(Metric m) {
  return m == Metric::accuracy ? "accuracy" : "roc_auc";
}

inline Metric parse_metric(const std::string& s) {
  if (s == "accuracy") return Metric::accuracy;
  if (s == "roc_auc") return Metric::roc_auc;
  throw ParamError("unknown metric '" + s + "'");
}

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  ModelHyper hyper;
  int max_epochs = 500;
  int patience = 40;
  int num_batches = 1;
  std::uint64_t seed = 0;
  std::string variant = "full";
  Metric metric = Metric::accuracy;
};

inline void check_train_config(const TrainConfig& c, std::size_t train_size) {
  if (c.max_epochs < 1) throw ParamError("train: max_epochs must be >= 1");
  if (c.patience < 1) throw ParamError("train: patience must be >= 1");
  if (c.num_batches < 1) throw ParamError("train: num_batches must be >= 1");
  if (std::size_t(c.num_batches) > train_size)
    throw ParamError("train: num_batches " + std::to_string(c.num_batches) +
                     " exceeds train-set size " + std::to_string(train_size));
  if (c.lr < 0.0 || c.weight_decay < 0.0)
    throw ParamError("train: lr and weight_decay must be >= 0");
}

// Deterministic epoch plan: shuffle keyed by (seed, epoch), then split into
// num_batches groups whose sizes differ by at most one.
inline std::vector<std::vector<Index>> make_batches(const std::vector<Index>& train_idx,
                                                    int num_batches, int epoch,
                                                    std::uint64_t seed) {
  if (num_batches < 1) throw ParamError("make_batches: num_batches must be >= 1");
  if (std::size_t(num_batches) > train_idx.size())
    throw ParamError("make_batches: num_batches " + std::to_string(num_batches) +
                     " exceeds " + std::to_string(train_idx.size()) + " train indices");
  std::vector<Index> order = train_idx;
  RngStream rng = RngStream(seed, /*stream=*/5).derive(std::uint64_t(epoch));
  rng.shuffle(order);
  std::vector<std::vector<Index>> batches(static_cast<std::size_t>(num_batches));
  const std::size_t base = order.size() / std::size_t(num_batches);
  const std::size_t rem = order.size() % std::size_t(num_batches);
  std::size_t pos = 0;
  for (std::size_t b = 0; b < std::size_t(num_batches); ++b) {
    const std::size_t len = base + (b < rem ? 1 : 0);
    batches[b].assign(order.begin() + pos, order.begin() + pos + len);
    pos += len;
  }
  return batches;
}

struct MetricsReport {
  std::string variant;
  Metric metric = Metric::accuracy;
  std::vector<double> train_loss;  // one entry per epoch run
  std::vector<double> val_metric;  // one entry per epoch run
  int epochs_run = 0;
  int best_epoch = 0;  // 1-based
  double best_val = 0.0;
  double test_metric = 0.0;
  int test_metric_evaluations = 0;  // must end at exactly 1
  // Wall-clock; kept out of the deterministic report serialization.
  double total_seconds = 0.0;
  double seconds_per_epoch = 0.0;
};

// Deterministic portion only: bitwise-identical across reruns.
inline json report_json(const MetricsReport& r) {
  return json{{"variant", r.variant},
              {"metric", metric_name(r.metric)},
              {"epochs_run", r.epochs_run},
              {"best_epoch", r.best_epoch},
              {"best_val", r.best_val},
              {"test_metric", r.test_metric},
              {"test_metric_evaluations", r.test_metric_evaluations},
              {"train_loss", r.train_loss},
              {"val_metric", r.val_metric}};
}

inline json timing_json(const MetricsReport& r) {
  return json{{"total_seconds", r.total_seconds},
              {"seconds_per_epoch", r.seconds_per_epoch}};
}

// Metric on the given rows; forward pass with dropout off.
inline double evaluate(const ModelParams<float>& params, const ModelInputs<float>& inputs,
                       const Labels& labels, const std::vector<Index>& idx, Metric metric) {
  if (idx.empty()) throw ParamError("evaluate: empty index set");
  const Batch<float> b = gather_batch(inputs, idx);
  const MatF logits = a2dug_forward(params, b, params.mask, 0.0, nullptr);
  Labels local(Index(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) local[Index(i)] = labels[idx[i]];
  std::vector<Index> all(idx.size());
  std::iota(all.begin(), all.end(), Index(0));
  return metric == Metric::accuracy ? accuracy(logits, local, all)
                                    : roc_auc(logits, local, all);
}

// Full training run: minibatched AdamW epochs, per-epoch validation, early
// stopping on the best validation metric with parameter restore, one test
// evaluation at the end.
inline std::pair<ModelParams<float>, MetricsReport> train(const ModelInputs<float>& inputs,
                                                          const Labels& labels,
                                                          Index num_classes, const Split& split,
                                                          const TrainConfig& cfg) {
  if (inputs.n != labels.size())
    throw ContractError("train: inputs n=" + std::to_string(inputs.n) + " vs " +
                        std::to_string(labels.size()) + " labels");
  if (split.train.empty() || split.val.empty() || split.test.empty())
    throw ParamError("train: split has an empty part");
  check_train_config(cfg, split.train.size());
  if (cfg.hyper.k != inputs.k)
    throw ContractError("train: config k=" + std::to_string(cfg.hyper.k) +
                        " does not match inputs k=" + std::to_string(inputs.k));
  const VariantMask mask = VariantMask::from_name(cfg.variant);

  const auto t0 = std::chrono::steady_clock::now();
  ModelParams<float> params = variant_params<float>(cfg.hyper, mask, inputs.n, inputs.d,
                                                    num_classes, cfg.seed);
  std::array<AdamWState<float>, kNumBranches> branch_state;
  AdamWState<float> final_state;
  AdamWConfig<float> opt;
  opt.lr = float(cfg.lr);
  opt.weight_decay = float(cfg.weight_decay);

  RngStream drop_rng = RngStream(cfg.seed, /*stream=*/6);
  MetricsReport report;
  report.variant = cfg.variant;
  report.metric = cfg.metric;

  ModelParams<float> best_params = params;
  int epochs_since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto batches = make_batches(split.train, cfg.num_batches, epoch, cfg.seed);
    double loss_sum = 0.0;
    for (const auto& rows : batches) {
      const Batch<float> b = gather_batch(inputs, rows);
      ModelCache<float> cache;
      const MatF logits = a2dug_forward(params, b, mask, cfg.hyper.dropout, &drop_rng, &cache);
      Labels local(Index(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) local[Index(i)] = labels[rows[i]];
      std::vector<Index> all(rows.size());
      std::iota(all.begin(), all.end(), Index(0));
      const auto [loss, grad] = softmax_cross_entropy(logits, local, all);
      loss_sum += loss * double(rows.size());
      ModelGrads<float> grads = a2dug_backward(params, mask, cache, grad);
      for (int bi = 0; bi < kNumBranches; ++bi)
        if (mask.active[std::size_t(bi)])
          adamw_step(params.branch[std::size_t(bi)].layers, grads.branch[std::size_t(bi)].layers,
                     branch_state[std::size_t(bi)], opt);
      adamw_step(params.final_mlp.layers, grads.final_grads.layers, final_state, opt);
    }
    report.train_loss.push_back(loss_sum / double(split.train.size()));
    const double val = evaluate(params, inputs, labels, split.val, cfg.metric);
    report.val_metric.push_back(val);
    report.epochs_run = epoch;

    if (report.best_epoch == 0 || val > report.best_val) {
      report.best_val = val;
      report.best_epoch = epoch;
      best_params = params;
      epochs_since_best = 0;
    } else if (++epochs_since_best >= cfg.patience) {
      break;
    }
  }

  params = best_params;
  report.test_metric = evaluate(params, inputs, labels, split.test, cfg.metric);
  report.test_metric_evaluations = 1;
  const auto t1 = std::chrono::steady_clock::now();
  report.total_seconds = std::chrono::duration<double>(t1 - t0).count();
  report.seconds_per_epoch =
      report.epochs_run > 0 ? report.total_seconds / report.epochs_run : 0.0;
  return {std::move(params), report};
}

inline std::pair<ModelParams<float>, MetricsReport> train(const Dataset& ds,
                                                          const FeatureBundle<float>& bundle,
                                                          const Split& split,
                                                          const TrainConfig& cfg) {
  const ModelInputs<float> inputs = make_model_inputs(ds.a, bundle);
  return train(inputs, ds.labels, ds.num_classes, split, cfg);
}

// --- ablation -----------------------------------------------------------

struct AblationRow {
  std::string variant;
  std::vector<double> val_runs, test_runs;
  double val_mean = 0, val_std = 0, test_mean = 0, test_std = 0;
};

struct AblationTable {
  Metric metric = Metric::accuracy;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  const double n = double(v.size());
  double mean = 0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};
}

}  // namespace detail

// Trains all six reported variants; run r uses seeds[r] with splits[r % |splits|].
inline AblationTable run_ablation(const ModelInputs<float>& inputs, const Labels& labels,
                                  Index num_classes, const SplitSet& splits,
                                  const TrainConfig& base,
                                  const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ParamError("run_ablation: need at least one seed");
  if (splits.empty()) throw ParamError("run_ablation: need at least one split");
  AblationTable table;
  table.metric = base.metric;
  table.seeds = seeds;
  for (const std::string& variant : VariantMask::ablation_names()) {
    AblationRow row;
    row.variant = variant;
    for (std::size_t r = 0; r < seeds.size(); ++r) {
      TrainConfig cfg = base;
      cfg.variant = variant;
      cfg.seed = seeds[r];
      const auto [params, rep] =
          train(inputs, labels, num_classes, splits[r % splits.size()], cfg);
      row.val_runs.push_back(rep.best_val);
      row.test_runs.push_back(rep.test_metric);
    }
    std::tie(row.val_mean, row.val_std) = detail::mean_std(row.val_runs);
    std::tie(row.test_mean, row.test_std) = detail::mean_std(row.test_runs);
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline json ablation_json(const AblationTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"variant", r.variant},
                    {"val_mean", r.val_mean},
                    {"val_std", r.val_std},
                    {"test_mean", r.test_mean},
                    {"test_std", r.test_std},
                    {"val_runs", r.val_runs},
                    {"test_runs", r.test_runs}});
  return json{{"metric", metric_name(t.metric)}, {"seeds", t.seeds}, {"rows", rows}};
}

// Aligned text table, one row per variant, cells as mean±std percentages.
inline std::string ablation_text(const AblationTable& t) {
  auto cell = [](double mean, double sd) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", 100.0 * mean, 100.0 * sd);
    return std::string(buf);
  };
  std::size_t name_w = std::string("variant").size();
  for (const auto& r : t.rows) name_w = std::max(name_w, r.variant.size());
  std::string out;
  const std::string metric = metric_name(t.metric);
  out += "variant" + std::string(name_w - 7, ' ') + "  val " + metric + "    test " + metric +
         "\n";
  for (const auto& r : t.rows) {
    out += r.variant + std::string(name_w - r.variant.size(), ' ');
    out += "  " + cell(r.val_mean, r.val_std) + "   " + cell(r.test_mean, r.test_std) + "\n";
  }
  return out;
}

// --- random-search HPO ----------------------------------------------------

struct HpoSpace {
  std::vector<double> lr = {1e-4, 3e-4, 1e-3};
  std::vector<double> weight_decay = {0.0, 1e-5, 1e-4, 1e-3};
  std::vector<Index> hidden = {128};
  std::vector<int> k = {3};
  std::vector<int> depth_feat = {1, 2};
  std::vector<int> depth_adj = {1, 2};
  std::vector<int> depth_agg = {1, 2};
  std::vector<int> depth_final = {1, 2, 3};
  std::vector<double> dropout = {0.0, 0.5};
};

namespace detail {

template <class T>
const T& pick(const std::vector<T>& list, const char* what, RngStream& rng) {
  if (list.empty()) throw ParamError(std::string("hpo space: empty candidate list for ") + what);
  return list[rng.uniform_int(list.size())];
}

}  // namespace detail

inline TrainConfig sample_config(const HpoSpace& space, const TrainConfig& base,
                                 RngStream& rng) {
  TrainConfig c = base;
  c.lr = detail::pick(space.lr, "lr", rng);
  c.weight_decay = detail::pick(space.weight_decay, "weight_decay", rng);
  c.hyper.hidden = detail::pick(space.hidden, "hidden", rng);
  c.hyper.k = detail::pick(space.k, "k", rng);
  c.hyper.depth_feat = detail::pick(space.depth_feat, "depth_feat", rng);
  c.hyper.depth_adj = detail::pick(space.depth_adj, "depth_adj", rng);
  c.hyper.depth_agg = detail::pick(space.depth_agg, "depth_agg", rng);
  c.hyper.depth_final = detail::pick(space.depth_final, "depth_final", rng);
  c.hyper.dropout = detail::pick(space.dropout, "dropout", rng);
  return c;
}

struct HpoTrial {
  int index = 0;
  TrainConfig config;
  double val_metric = 0, test_metric = 0;
  int epochs_run = 0;
  double seconds = 0;
};

struct HpoResult {
  int best_index = -1;
  TrainConfig best_config;
  std::vector<HpoTrial> trials;
};

// Samples n_trials configs upfront (deterministic per seed), trains each,
// and returns the argmax-validation trial. Trials are independent; `jobs`
// of them run concurrently.
inline HpoResult random_search(const HpoSpace& space, int n_trials,
                               const ModelInputs<float>& inputs, const Labels& labels,
                               Index num_classes, const Split& split, const TrainConfig& base,
                               std::uint64_t seed, int jobs = 1) {
  if (n_trials < 1) throw ParamError("random_search: n_trials must be >= 1");
  if (jobs < 1) throw ParamError("random_search: jobs must be >= 1");
  RngStream sample_rng(seed, /*stream=*/7);
  HpoResult res;
  res.trials.resize(std::size_t(n_trials));
  for (int t = 0; t < n_trials; ++t) {
    HpoTrial& trial = res.trials[std::size_t(t)];
    trial.index = t;
    trial.config = sample_config(space, base, sample_rng);
    trial.config.seed = sample_rng.derive(std::uint64_t(t)).seed();
    if (trial.config.hyper.k > inputs.k)
      throw ParamError("random_search: sampled k=" + std::to_string(trial.config.hyper.k) +
                       " exceeds precomputed k=" + std::to_string(inputs.k));
  }

  // Inputs sliced per distinct k (cheap views rebuilt from the same bundle
  // are unnecessary: trials share `inputs` when k matches; smaller k gets a
  // narrowed copy built once here).
  std::map<int, ModelInputs<float>> by_k;
  for (const auto& t : res.trials)
    if (t.config.hyper.k != inputs.k && !by_k.count(t.config.hyper.k))
      by_k.emplace(t.config.hyper.k, narrow_inputs(inputs, t.config.hyper.k));

  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int t = next.fetch_add(1);
      if (t >= n_trials) return;
      HpoTrial& trial = res.trials[std::size_t(t)];
      const ModelInputs<float>& in =
          trial.config.hyper.k == inputs.k ? inputs : by_k.at(trial.config.hyper.k);
      const auto [params, rep] = train(in, labels, num_classes, split, trial.config);
      trial.val_metric = rep.best_val;
      trial.test_metric = rep.test_metric;
      trial.epochs_run = rep.epochs_run;
      trial.seconds = rep.total_seconds;
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < std::min(jobs, n_trials); ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (const auto& t : res.trials)
    if (res.best_index < 0 || t.val_metric > res.trials[std::size_t(res.best_index)].val_metric)
      res.best_index = t.index;
  res.best_config = res.trials[std::size_t(res.best_index)].config;
  return res;
}

inline std::string hpo_trials_csv(const HpoResult& r) {
  std::string out =
      "trial,lr,weight_decay,hidden,k,depth_feat,depth_adj,depth_agg,depth_final,dropout,"
      "val_metric,test_metric,epochs,seconds\n";
  for (const auto& t : r.trials) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%g,%g,%lld,%d,%d,%d,%d,%d,%g,%.6f,%.6f,%d,%.3f\n",
                  t.index, t.config.lr, t.config.weight_decay,
                  (long long)t.config.hyper.hidden, t.config.hyper.k,
                  t.config.hyper.depth_feat, t.config.hyper.depth_adj, t.config.hyper.depth_agg,
                  t.config.hyper.depth_final, t.config.hyper.dropout, t.val_metric,
                  t.test_metric, t.epochs_run, t.seconds);
    out += buf;
  }
  return out;
}

}  // namespace a2dug
