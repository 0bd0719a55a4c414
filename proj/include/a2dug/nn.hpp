// Small dense MLP stack with hand-written backward pass.
//
// Topology: depth layers, ReLU + inverted dropout after every layer except
// the last. depth == 1 is a single linear map. The first layer can consume
// a sparse (CSR) input, in which case its weight gradient is accumulated
// with a row-scatter instead of a dense GEMM and the input activation is
// never densified.
//
// Everything is templated on Scalar so the same code runs in float for
// training and in double when a high-precision gradient reference is
// needed.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "a2dug/common.hpp"
#include "a2dug/rng.hpp"
#include "a2dug/sparse.hpp"

namespace a2dug {

template <class Scalar>
struct DenseLayer {
  Mat<Scalar> w;  // in x out
  Vec<Scalar> b;  // out
};

template <class Scalar>
struct MlpParams {
  std::vector<DenseLayer<Scalar>> layers;

  Index in_dim() const { return layers.empty() ? 0 : layers.front().w.rows(); }
  Index out_dim() const { return layers.empty() ? 0 : layers.back().w.cols(); }

  template <class T>
  MlpParams<T> cast() const {
    MlpParams<T> r;
    for (const auto& l : layers)
      r.layers.push_back({l.w.template cast<T>(), l.b.template cast<T>()});
    return r;
  }
};

// Glorot/Xavier uniform: w ~ U(-s, s) with s = sqrt(6 / (fan_in + fan_out)),
// biases zero. Row-major fill order so the draw sequence is reproducible.
template <class Scalar>
DenseLayer<Scalar> glorot_init(Index in, Index out, RngStream& rng) {
  if (in < 1 || out < 1)
    throw ParamError("glorot_init: dims must be positive, got " + shape_str(in, out));
  const double s = std::sqrt(6.0 / double(in + out));
  DenseLayer<Scalar> l;
  l.w.resize(in, out);
  for (Index i = 0; i < in; ++i)
    for (Index j = 0; j < out; ++j) l.w(i, j) = Scalar(rng.uniform(-s, s));
  l.b = Vec<Scalar>::Zero(out);
  return l;
}

// depth >= 1 layers: in -> hidden -> ... -> hidden -> out.
template <class Scalar>
MlpParams<Scalar> make_mlp(Index in, Index hidden, Index out, int depth, RngStream& rng) {
  if (depth < 1) throw ParamError("make_mlp: depth must be >= 1, got " + std::to_string(depth));
  MlpParams<Scalar> p;
  for (int i = 0; i < depth; ++i) {
    const Index li = (i == 0) ? in : hidden;
    const Index lo = (i == depth - 1) ? out : hidden;
    p.layers.push_back(glorot_init<Scalar>(li, lo, rng));
  }
  return p;
}

// Forward cache. Holds everything backward needs; `valid` guards against
// reuse after a backward pass already consumed it.
template <class Scalar>
struct MlpCache {
  bool valid = false;
  bool sparse_input = false;
  const CsrMatrix<Scalar>* sparse_x = nullptr;  // borrowed; alive through backward
  Mat<Scalar> dense_x;
  std::vector<Mat<Scalar>> pre;        // pre-activation z_i per layer
  std::vector<Mat<Scalar>> post;       // input to layer i+1 (after relu+dropout)
  std::vector<Mat<Scalar>> drop_mask;  // scaled keep mask per hidden layer
};

namespace detail {

// x * w with each output row accumulated independently in fixed k order
// (sum of scaled w rows). A row's result is bitwise identical no matter
// which row subset it is computed in, which is what makes minibatch
// forward passes exactly equal to full-batch ones. Zero inputs are skipped;
// adding a zero contribution cannot change the accumulator bit pattern, and
// post-ReLU activations are full of zeros.
template <class Scalar>
Mat<Scalar> row_stable_product(const Mat<Scalar>& x, const Mat<Scalar>& w) {
  Mat<Scalar> out = Mat<Scalar>::Zero(x.rows(), w.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index k = 0; k < x.cols(); ++k) {
      const Scalar v = x(i, k);
      if (v != Scalar(0)) out.row(i) += v * w.row(k);
    }
  return out;
}

// Inverted dropout: mask entries are 0 or 1/keep, so inference needs no
// rescaling. rate == 0 produces an all-ones mask cheaply.
template <class Scalar>
Mat<Scalar> dropout_mask(Index r, Index c, double rate, RngStream* rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ParamError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (rate == 0.0 || rng == nullptr) return Mat<Scalar>::Ones(r, c);
  const Scalar scale = Scalar(1.0 / (1.0 - rate));
  Mat<Scalar> m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng->uniform() < rate ? Scalar(0) : scale;
  return m;
}

template <class Scalar>
Mat<Scalar> relu(const Mat<Scalar>& z) {
  return z.cwiseMax(Scalar(0));
}

}  // namespace detail

// Dense-input forward. Pass rng == nullptr (or rate 0) for inference:
// dropout becomes the identity.
template <class Scalar>
Mat<Scalar> mlp_forward(const MlpParams<Scalar>& p, const Mat<Scalar>& x, double dropout,
                        RngStream* rng, MlpCache<Scalar>* cache = nullptr) {
  if (p.layers.empty()) throw ParamError("mlp_forward: empty parameter stack");
  if (x.cols() != p.in_dim())
    throw ShapeError("mlp_forward: input has " + std::to_string(x.cols()) +
                     " cols, layer expects " + std::to_string(p.in_dim()));
  if (cache) {
    *cache = {};
    cache->dense_x = x;
  }
  Mat<Scalar> h = x;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    Mat<Scalar> z = detail::row_stable_product(h, p.layers[i].w);
    z.rowwise() += p.layers[i].b.transpose();
    if (cache) cache->pre.push_back(z);
    if (i + 1 < p.layers.size()) {
      Mat<Scalar> mask =
          detail::dropout_mask<Scalar>(z.rows(), z.cols(), dropout, rng);
      h = detail::relu(z).cwiseProduct(mask);
      if (cache) {
        cache->drop_mask.push_back(std::move(mask));
        cache->post.push_back(h);
      }
    } else {
      h = std::move(z);
    }
  }
  if (cache) cache->valid = true;
  return h;
}

// a * w + b broadcast per row, without densifying a.
template <class Scalar>
Mat<Scalar> sparse_linear_forward(const CsrMatrix<Scalar>& a, const Mat<Scalar>& w,
                                  const Vec<Scalar>& b) {
  if (a.cols != w.rows())
    throw ShapeError("sparse_linear_forward: " + shape_str(a.rows, a.cols) + " * " +
                     shape_str(w.rows(), w.cols()));
  if (b.size() != w.cols())
    throw ShapeError("sparse_linear_forward: bias size " + std::to_string(b.size()) +
                     " does not match " + std::to_string(w.cols()) + " outputs");
  Mat<Scalar> out = spmm(a, w);
  out.rowwise() += b.transpose();
  return out;
}

// Sparse-input forward: first layer consumes a CSR matrix. The cache keeps a
// pointer to it; the caller must keep the matrix alive until backward runs.
template <class Scalar>
Mat<Scalar> mlp_forward(const MlpParams<Scalar>& p, const CsrMatrix<Scalar>& x, double dropout,
                        RngStream* rng, MlpCache<Scalar>* cache = nullptr) {
  if (p.layers.empty()) throw ParamError("mlp_forward: empty parameter stack");
  if (x.cols != p.in_dim())
    throw ShapeError("mlp_forward: sparse input has " + std::to_string(x.cols) +
                     " cols, layer expects " + std::to_string(p.in_dim()));
  if (cache) {
    *cache = {};
    cache->sparse_input = true;
    cache->sparse_x = &x;
  }
  // z0 = x * W0 + b0 via row-wise sparse accumulation.
  Mat<Scalar> z = spmm(x, p.layers[0].w);
  z.rowwise() += p.layers[0].b.transpose();
  if (cache) cache->pre.push_back(z);
  Mat<Scalar> h;
  if (p.layers.size() == 1) {
    h = std::move(z);
  } else {
    Mat<Scalar> mask = detail::dropout_mask<Scalar>(z.rows(), z.cols(), dropout, rng);
    h = detail::relu(z).cwiseProduct(mask);
    if (cache) {
      cache->drop_mask.push_back(mask);
      cache->post.push_back(h);
    }
    for (std::size_t i = 1; i < p.layers.size(); ++i) {
      Mat<Scalar> zi = detail::row_stable_product(h, p.layers[i].w);
      zi.rowwise() += p.layers[i].b.transpose();
      if (cache) cache->pre.push_back(zi);
      if (i + 1 < p.layers.size()) {
        Mat<Scalar> mi = detail::dropout_mask<Scalar>(zi.rows(), zi.cols(), dropout, rng);
        h = detail::relu(zi).cwiseProduct(mi);
        if (cache) {
          cache->drop_mask.push_back(std::move(mi));
          cache->post.push_back(h);
        }
      } else {
        h = std::move(zi);
      }
    }
  }
  if (cache) cache->valid = true;
  return h;
}

template <class Scalar>
struct MlpGrads {
  std::vector<DenseLayer<Scalar>> layers;  // same shapes as the parameters
  Mat<Scalar> d_input;                     // empty when the input was sparse
};

// Backward pass. Consumes the cache (it is marked invalid) and returns
// parameter gradients plus, for dense inputs, the gradient w.r.t. the input.
template <class Scalar>
MlpGrads<Scalar> mlp_backward(const MlpParams<Scalar>& p, MlpCache<Scalar>& cache,
                              const Mat<Scalar>& d_out) {
  if (!cache.valid)
    throw ContractError("mlp_backward: cache is stale (already consumed or never filled)");
  cache.valid = false;
  const std::size_t L = p.layers.size();
  if (cache.pre.size() != L)
    throw ContractError("mlp_backward: cache does not match parameter stack");
  if (d_out.rows() != cache.pre.back().rows() || d_out.cols() != cache.pre.back().cols())
    throw ShapeError("mlp_backward: d_out shape " + shape_str(d_out.rows(), d_out.cols()) +
                     " does not match logits " +
                     shape_str(cache.pre.back().rows(), cache.pre.back().cols()));

  MlpGrads<Scalar> g;
  g.layers.resize(L);
  Mat<Scalar> delta = d_out;  // gradient w.r.t. pre-activation of current layer
  for (std::size_t li = L; li-- > 0;) {
    // Input to layer li.
    const bool first = (li == 0);
    g.layers[li].b = delta.colwise().sum();
    if (first && cache.sparse_input) {
      if (cache.sparse_x == nullptr)
        throw ContractError("mlp_backward: sparse input no longer available");
      // grad_W0 = x^T delta, accumulated by scattering each sparse row.
      const CsrMatrix<Scalar>& x = *cache.sparse_x;
      Mat<Scalar> gw = Mat<Scalar>::Zero(p.layers[0].w.rows(), p.layers[0].w.cols());
      for (Index r = 0; r < x.rows; ++r)
        for (Index e = x.row_ptr[std::size_t(r)]; e < x.row_ptr[std::size_t(r) + 1]; ++e)
          gw.row(x.col_idx[std::size_t(e)]) += x.values[std::size_t(e)] * delta.row(r);
      g.layers[0].w = std::move(gw);
      // No d_input for sparse inputs.
    } else {
      const Mat<Scalar>& input = first ? cache.dense_x : cache.post[li - 1];
      g.layers[li].w = input.transpose() * delta;
      Mat<Scalar> d_in = delta * p.layers[li].w.transpose();
      if (first) {
        g.d_input = std::move(d_in);
      } else {
        // Through dropout then ReLU of the previous layer.
        const Mat<Scalar>& z = cache.pre[li - 1];
        delta = d_in.cwiseProduct(cache.drop_mask[li - 1])
                    .cwiseProduct((z.array() > Scalar(0)).template cast<Scalar>().matrix());
      }
    }
  }
  return g;
}

// --- loss -------------------------------------------------------------

// Mean softmax cross-entropy over the rows listed in `mask`, with the
// gradient w.r.t. the logits of those rows (zero elsewhere). Uses the
// max-shift trick for stability.
template <class Scalar>
std::pair<double, Mat<Scalar>> softmax_cross_entropy(const Mat<Scalar>& logits,
                                                     const Labels& labels,
                                                     const std::vector<Index>& mask) {
  if (logits.rows() != labels.size())
    throw ShapeError("softmax_cross_entropy: " + std::to_string(logits.rows()) +
                     " logit rows vs " + std::to_string(labels.size()) + " labels");
  if (mask.empty()) throw ParamError("softmax_cross_entropy: empty mask");
  const Index c = logits.cols();
  Mat<Scalar> grad = Mat<Scalar>::Zero(logits.rows(), c);
  double loss = 0.0;
  const double inv_m = 1.0 / double(mask.size());
  for (Index r : mask) {
    if (r < 0 || r >= logits.rows())
      throw IndexError("softmax_cross_entropy: mask row " + std::to_string(r) +
                       " out of range");
    const int y = labels[r];
    if (y < 0 || y >= c)
      throw IndexError("softmax_cross_entropy: label " + std::to_string(y) +
                       " out of range for " + std::to_string(c) + " classes");
    // Softmax in double regardless of Scalar for a stable loss value.
    const auto row = logits.row(r).template cast<double>().eval();
    const double mx = row.maxCoeff();
    const auto ex = (row.array() - mx).exp().eval();
    const double z = ex.sum();
    loss += (std::log(z) - (row[y] - mx)) * inv_m;
    for (Index j = 0; j < c; ++j) {
      const double p = ex[j] / z;
      grad(r, j) = Scalar((p - (j == y ? 1.0 : 0.0)) * inv_m);
    }
  }
  if (!std::isfinite(loss)) throw NumericError("softmax_cross_entropy: non-finite loss");
  return {loss, grad};
}

// --- optimizer --------------------------------------------------------

template <class Scalar>
struct AdamWConfig {
  Scalar lr = Scalar(0.01);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
  Scalar weight_decay = Scalar(0);
};

template <class Scalar>
struct AdamWState {
  long long step = 0;
  std::vector<DenseLayer<Scalar>> m;  // first moments, same shapes as params
  std::vector<DenseLayer<Scalar>> v;  // second moments
};

template <class Scalar>
std::vector<DenseLayer<Scalar>> zeros_like(const std::vector<DenseLayer<Scalar>>& layers) {
  std::vector<DenseLayer<Scalar>> z;
  z.reserve(layers.size());
  for (const auto& l : layers)
    z.push_back({Mat<Scalar>::Zero(l.w.rows(), l.w.cols()), Vec<Scalar>::Zero(l.b.size())});
  return z;
}

namespace detail {

// Decoupled AdamW on one tensor: decay is applied to the parameter first,
// then the bias-corrected Adam step uses the raw gradient.
template <class Scalar, class Tensor>
void adamw_tensor(Tensor& p, const Tensor& g, Tensor& m, Tensor& v,
                  const AdamWConfig<Scalar>& cfg, double bc1, double bc2) {
  p.array() -= (cfg.lr * cfg.weight_decay) * p.array();
  m.array() = cfg.beta1 * m.array() + (Scalar(1) - cfg.beta1) * g.array();
  v.array() = cfg.beta2 * v.array() + (Scalar(1) - cfg.beta2) * g.array().square();
  const auto m_hat = m.array() / Scalar(bc1);
  const auto v_hat = v.array() / Scalar(bc2);
  p.array() -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
}

}  // namespace detail

template <class Scalar>
void adamw_step(std::vector<DenseLayer<Scalar>>& params,
                const std::vector<DenseLayer<Scalar>>& grads, AdamWState<Scalar>& state,
                const AdamWConfig<Scalar>& cfg) {
  if (params.size() != grads.size())
    throw ContractError("adamw_step: params/grads layer count mismatch");
  if (state.step == 0) {
    state.m = zeros_like(params);
    state.v = zeros_like(params);
  }
  if (state.m.size() != params.size())
    throw ContractError("adamw_step: optimizer state does not match parameters");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(double(cfg.beta1), double(state.step));
  const double bc2 = 1.0 - std::pow(double(cfg.beta2), double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].w.rows() != grads[i].w.rows() || params[i].w.cols() != grads[i].w.cols() ||
        params[i].b.size() != grads[i].b.size())
      throw ContractError("adamw_step: gradient shape mismatch at layer " + std::to_string(i));
    detail::adamw_tensor(params[i].w, grads[i].w, state.m[i].w, state.v[i].w, cfg, bc1, bc2);
    detail::adamw_tensor(params[i].b, grads[i].b, state.m[i].b, state.v[i].b, cfg, bc1, bc2);
  }
}

}  // namespace a2dug
