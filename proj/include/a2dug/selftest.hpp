// Built-in numerical self-tests behind the `selftest` CLI command:
//   gradient_check         analytic vs central finite-difference gradients
//   oracle_equivalence     sparse ops vs dense brute-force recomputation
//   minibatch_equivalence  batched vs full-batch forward logits
// `corrupt_gradient` deliberately perturbs one analytic gradient so the
// detector itself can be exercised.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "a2dug/common.hpp"
#include "a2dug/data.hpp"
#include "a2dug/model.hpp"
#include "a2dug/nn.hpp"
#include "a2dug/precompute.hpp"
#include "a2dug/rng.hpp"
#include "a2dug/sparse.hpp"
#include "a2dug/train.hpp"

namespace a2dug {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestOptions {
  bool corrupt_gradient = false;
};

namespace detail {

inline bool rel_close(double a, double b, double tol, double floor = 1e-8) {
  return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), floor});
}

// Loss of the full model on every node, evaluated in double.
inline double selftest_loss(const ModelParams<double>& p, const Batch<double>& batch,
                            const Labels& labels) {
  const Mat<double> logits = a2dug_forward(p, batch, p.mask, 0.0, nullptr);
  std::vector<Index> all(std::size_t(logits.rows()));
  std::iota(all.begin(), all.end(), Index(0));
  return softmax_cross_entropy(logits, labels, all).first;
}

inline SuiteResult suite_gradient_check(const SelftestOptions& opt) {
  SuiteResult res{"gradient_check", false, ""};
  const auto ds = gen_directional(10, 2.0, 3, 11);
  const auto bundle = precompute_all<double>(ds.a, ds.x.cast<double>(), 2);
  const ModelInputs<double> inputs = make_model_inputs(ds.a, bundle);
  ModelHyper hyper;
  hyper.hidden = 6;
  hyper.k = 2;
  ModelParams<double> params = variant_params<double>(hyper, VariantMask::from_name("full"),
                                                      inputs.n, inputs.d, ds.num_classes, 21);
  std::vector<Index> all(std::size_t(inputs.n));
  std::iota(all.begin(), all.end(), Index(0));
  Batch<double> batch = gather_batch(inputs, all);

  ModelCache<double> cache;
  const Mat<double> logits = a2dug_forward(params, batch, params.mask, 0.0, nullptr, &cache);
  const auto [loss, grad_logits] = softmax_cross_entropy(logits, ds.labels, all);
  ModelGrads<double> grads = a2dug_backward(params, params.mask, cache, grad_logits);
  if (opt.corrupt_gradient) grads.final_grads.layers[0].w(0, 0) += 1e-2;

  // Central finite differences on a spread of parameters per tensor.
  const double eps = 1e-5;
  int checked = 0, failed = 0;
  double worst = 0.0;
  auto check_tensor = [&](Mat<double>& w, const Mat<double>& gw) {
    const Index total = w.size();
    for (Index s = 0; s < std::min<Index>(total, 5); ++s) {
      const Index flat = (s * 7919) % total;
      const Index i = flat / w.cols(), j = flat % w.cols();
      const double keep = w(i, j);
      w(i, j) = keep + eps;
      const double up = selftest_loss(params, batch, ds.labels);
      w(i, j) = keep - eps;
      const double dn = selftest_loss(params, batch, ds.labels);
      w(i, j) = keep;
      const double fd = (up - dn) / (2 * eps);
      ++checked;
      const double err = std::abs(fd - gw(i, j)) /
                         std::max({std::abs(fd), std::abs(gw(i, j)), 1e-6});
      worst = std::max(worst, err);
      if (err > 1e-4) ++failed;
    }
  };
  for (int bi = 0; bi < kNumBranches; ++bi)
    for (std::size_t li = 0; li < params.branch[std::size_t(bi)].layers.size(); ++li)
      check_tensor(params.branch[std::size_t(bi)].layers[li].w,
                   grads.branch[std::size_t(bi)].layers[li].w);
  for (std::size_t li = 0; li < params.final_mlp.layers.size(); ++li)
    check_tensor(params.final_mlp.layers[li].w, grads.final_grads.layers[li].w);

  res.passed = failed == 0;
  res.detail = std::to_string(checked) + " parameters checked, " + std::to_string(failed) +
               " mismatched, worst relative error " + std::to_string(worst);
  return res;
}

inline SuiteResult suite_oracle_equivalence() {
  SuiteResult res{"oracle_equivalence", false, ""};
  RngStream rng(311);
  int graphs = 0, failures = 0;
  for (int g = 0; g < 10; ++g) {
    const Index n = 6 + Index(rng.uniform_int(19));
    std::vector<std::pair<Index, Index>> edges;
    Mat<double> dense = Mat<double>::Zero(n, n);
    const int m = int(rng.uniform_int(std::uint64_t(3 * n)));
    for (int e = 0; e < m; ++e) {
      const Index s = Index(rng.uniform_int(std::uint64_t(n)));
      const Index t = Index(rng.uniform_int(std::uint64_t(n)));
      edges.push_back({s, t});
      dense(s, t) = 1.0;
    }
    const auto a = CsrMatrix<double>::from_edges(n, edges);
    ++graphs;
    auto expect = [&](bool ok) {
      if (!ok) ++failures;
    };
    expect(to_dense(a) == dense);
    expect(to_dense(transpose(a)) == Mat<double>(dense.transpose()));
    Mat<double> und = Mat<double>::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        und(i, j) = (dense(i, j) != 0.0 || dense(j, i) != 0.0) ? 1.0 : 0.0;
    expect(to_dense(to_undirected(a)) == und);
    Mat<double> loops = dense;
    for (Index i = 0; i < n; ++i) loops(i, i) = 1.0;
    expect(to_dense(add_self_loops(a)) == loops);
    // Degree-normalized undirected, zero-degree rows stay zero.
    const auto udeg = und.rowwise().sum().eval();
    Mat<double> s_dense = Mat<double>::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        if (und(i, j) != 0.0 && udeg[i] > 0 && udeg[j] > 0)
          s_dense(i, j) = und(i, j) / std::sqrt(udeg[i] * udeg[j]);
    const auto au = to_undirected(a);
    const Mat<double> s_csr = to_dense(degree_normalize(au, degrees(au)));
    expect(((s_csr - s_dense).cwiseAbs().maxCoeff()) <= 1e-12);
    // SpMM against dense multiply.
    Mat<double> x(n, 4);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < 4; ++j) x(i, j) = rng.normal();
    const Mat<double> want = dense * x;
    const Mat<double> got = spmm(a, x);
    expect((want - got).cwiseAbs().maxCoeff() <=
           1e-10 * std::max(1.0, want.cwiseAbs().maxCoeff()));
  }
  res.passed = failures == 0;
  res.detail = std::to_string(graphs) + " graphs, " + std::to_string(failures) +
               " oracle mismatches";
  return res;
}

inline SuiteResult suite_minibatch_equivalence() {
  SuiteResult res{"minibatch_equivalence", false, ""};
  const auto ds = gen_directional(40, 3.0, 4, 17);
  const auto bundle = precompute_all<float>(ds.a, ds.x.cast<double>(), 2);
  const ModelInputs<float> inputs = make_model_inputs(ds.a, bundle);
  ModelHyper hyper;
  hyper.hidden = 8;
  hyper.k = 2;
  const ModelParams<float> params = variant_params<float>(
      hyper, VariantMask::from_name("full"), inputs.n, inputs.d, ds.num_classes, 5);
  std::vector<Index> all(std::size_t(inputs.n));
  std::iota(all.begin(), all.end(), Index(0));
  const MatF full = a2dug_forward(params, gather_batch(inputs, all), params.mask, 0.0, nullptr);

  const auto batches = make_batches(all, 4, /*epoch=*/0, /*seed=*/9);
  MatF assembled(inputs.n, full.cols());
  for (const auto& rows : batches) {
    const MatF part =
        a2dug_forward(params, gather_batch(inputs, rows), params.mask, 0.0, nullptr);
    for (std::size_t i = 0; i < rows.size(); ++i) assembled.row(rows[i]) = part.row(Index(i));
  }
  const double diff = double((full - assembled).cwiseAbs().maxCoeff());
  res.passed = diff <= 1e-6;
  res.detail = "max |full - batched| = " + std::to_string(diff);
  return res;
}

}  // namespace detail

inline std::vector<SuiteResult> run_selftests(const SelftestOptions& opt = {}) {
  return {detail::suite_gradient_check(opt), detail::suite_oracle_equivalence(),
          detail::suite_minibatch_equivalence()};
}

}  // namespace a2dug
