// A2DUG model assembly.
//
// Seven input branches, each its own MLP with shared hidden width h:
//   feat       X                 (dense, d wide)
//   adj_dir    A rows            (sparse, n wide)
//   adj_trans  A^T rows          (sparse, n wide)
//   adj_und    A_und rows        (sparse, n wide)
//   agg_dir    [AX (A+I)X A^2X (A+I)^2X ...]           (dense, 2kd wide)
//   agg_trans  same for the transposed graph            (dense, 2kd wide)
//   agg_und    [SX S_hat X S^2 X S_hat^2 X ...]         (dense, 2kd wide)
// Active branch outputs are concatenated in this fixed order, passed through
// ReLU + dropout, and a final MLP maps the concat to class logits. Ablation
// variants are masks over the seven branches; the feature branch is always
// active. Branch parameters are constructed for all seven branches regardless
// of mask (identical init draws across variants); only the final MLP's input
// width depends on the mask.

#pragma once

#include <array>
#include <initializer_list>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "a2dug/common.hpp"
#include "a2dug/io_util.hpp"
#include "a2dug/nn.hpp"
#include "a2dug/precompute.hpp"
#include "a2dug/rng.hpp"
#include "a2dug/sparse.hpp"

namespace a2dug {

enum class Branch : int {
  feat = 0,
  adj_dir,
  adj_trans,
  adj_und,
  agg_dir,
  agg_trans,
  agg_und,
};

constexpr int kNumBranches = 7;

inline std::string branch_name(Branch b) {
  switch (b) {
    case Branch::feat: return "feat";
    case Branch::adj_dir: return "adj_dir";
    case Branch::adj_trans: return "adj_trans";
    case Branch::adj_und: return "adj_und";
    case Branch::agg_dir: return "agg_dir";
    case Branch::agg_trans: return "agg_trans";
    case Branch::agg_und: return "agg_und";
  }
  throw ParamError("branch_name: unknown branch");
}

struct VariantMask {
  std::string name;
  std::array<bool, kNumBranches> active{};

  bool is_active(Branch b) const { return active[std::size_t(int(b))]; }
  int num_active() const {
    int n = 0;
    for (bool a : active) n += a;
    return n;
  }

  // The six reported variants plus a feature-only debug mask.
  static VariantMask from_name(const std::string& name) {
    VariantMask m;
    m.name = name;
    auto set = [&](std::initializer_list<Branch> off) {
      m.active.fill(true);
      for (Branch b : off) m.active[std::size_t(int(b))] = false;
    };
    if (name == "full")
      set({});
    else if (name == "wo_directed")
      set({Branch::adj_dir, Branch::adj_trans, Branch::agg_dir, Branch::agg_trans});
    else if (name == "wo_undirected")
      set({Branch::adj_und, Branch::agg_und});
    else if (name == "wo_aggregation")
      set({Branch::agg_dir, Branch::agg_trans, Branch::agg_und});
    else if (name == "wo_adjacency")
      set({Branch::adj_dir, Branch::adj_trans, Branch::adj_und});
    else if (name == "wo_transpose")
      set({Branch::adj_trans, Branch::agg_trans});
    else if (name == "features_only")
      set({Branch::adj_dir, Branch::adj_trans, Branch::adj_und, Branch::agg_dir,
           Branch::agg_trans, Branch::agg_und});
    else
      throw ParamError("unknown variant '" + name + "'");
    return m;
  }

  // Table row order for ablation reports.
  static std::vector<std::string> ablation_names() {
    return {"full",         "wo_directed", "wo_undirected",
            "wo_aggregation", "wo_adjacency", "wo_transpose"};
  }
};

struct ModelHyper {
  Index hidden = 64;
  int k = 2;
  int depth_feat = 1;
  int depth_adj = 1;
  int depth_agg = 1;
  int depth_final = 2;
  double dropout = 0.0;
};

template <class Scalar>
struct ModelParams {
  ModelHyper hyper;
  VariantMask mask;
  Index n = 0, d = 0, y = 0;
  std::uint64_t init_seed = 0;
  std::array<MlpParams<Scalar>, kNumBranches> branch;
  MlpParams<Scalar> final_mlp;

  Index concat_width() const { return hyper.hidden * mask.num_active(); }

  template <class T>
  ModelParams<T> cast() const {
    ModelParams<T> r;
    r.hyper = hyper;
    r.mask = mask;
    r.n = n;
    r.d = d;
    r.y = y;
    r.init_seed = init_seed;
    for (int i = 0; i < kNumBranches; ++i)
      r.branch[std::size_t(i)] = branch[std::size_t(i)].template cast<T>();
    r.final_mlp = final_mlp.template cast<T>();
    return r;
  }
};

template <class Scalar>
Index branch_in_dim(const ModelParams<Scalar>& p, Branch b) {
  switch (b) {
    case Branch::feat: return p.d;
    case Branch::adj_dir:
    case Branch::adj_trans:
    case Branch::adj_und: return p.n;
    default: return Index(2 * p.hyper.k) * p.d;
  }
}

// Builds all seven branch MLPs (in Branch order) plus the final MLP sized to
// the mask's active concat width. The draw sequence for branch weights does
// not depend on the mask, so variants share branch initializations per seed.
template <class Scalar>
ModelParams<Scalar> variant_params(const ModelHyper& hyper, const VariantMask& mask, Index n,
                                   Index d, Index y, std::uint64_t seed) {
  if (n < 1 || d < 1 || y < 2) throw ParamError("variant_params: need n >= 1, d >= 1, y >= 2");
  if (hyper.k < 1) throw ParamError("variant_params: k must be >= 1");
  ModelParams<Scalar> p;
  p.hyper = hyper;
  p.mask = mask;
  p.n = n;
  p.d = d;
  p.y = y;
  p.init_seed = seed;
  RngStream rng(seed, /*stream=*/1);
  const Index h = hyper.hidden;
  const Index agg_w = Index(2 * hyper.k) * d;
  p.branch[0] = make_mlp<Scalar>(d, h, h, hyper.depth_feat, rng);
  p.branch[1] = make_mlp<Scalar>(n, h, h, hyper.depth_adj, rng);
  p.branch[2] = make_mlp<Scalar>(n, h, h, hyper.depth_adj, rng);
  p.branch[3] = make_mlp<Scalar>(n, h, h, hyper.depth_adj, rng);
  p.branch[4] = make_mlp<Scalar>(agg_w, h, h, hyper.depth_agg, rng);
  p.branch[5] = make_mlp<Scalar>(agg_w, h, h, hyper.depth_agg, rng);
  p.branch[6] = make_mlp<Scalar>(agg_w, h, h, hyper.depth_agg, rng);
  p.final_mlp = make_mlp<Scalar>(h * mask.num_active(), h, y, hyper.depth_final, rng);
  return p;
}

// --- model inputs -----------------------------------------------------

// Full-graph, row-aligned inputs for every branch, assembled once from the
// adjacency and the precomputed bundle.
template <class Scalar>
struct ModelInputs {
  Index n = 0, d = 0;
  int k = 0;
  Mat<Scalar> x;
  CsrMatrix<Scalar> a, at, aund;
  Mat<Scalar> gnn_dir, gnn_trans, gnn_und;

  template <class T>
  ModelInputs<T> cast() const {
    ModelInputs<T> r;
    r.n = n;
    r.d = d;
    r.k = k;
    r.x = x.template cast<T>();
    r.a = a.template cast<T>();
    r.at = at.template cast<T>();
    r.aund = aund.template cast<T>();
    r.gnn_dir = gnn_dir.template cast<T>();
    r.gnn_trans = gnn_trans.template cast<T>();
    r.gnn_und = gnn_und.template cast<T>();
    return r;
  }
};

namespace detail {

// Equation-order channel layout for one GNN branch: hop-ascending pairs
// (plain, loop), each d wide.
template <class Scalar>
Mat<Scalar> stack_family(const FeatureBundle<Scalar>& b, ChannelFamily plain,
                         ChannelFamily loop) {
  Mat<Scalar> out(b.n, Index(2 * b.k) * b.d);
  for (int h = 1; h <= b.k; ++h) {
    out.middleCols(Index(2 * (h - 1)) * b.d, b.d) = b.channel({plain, h});
    out.middleCols(Index(2 * (h - 1) + 1) * b.d, b.d) = b.channel({loop, h});
  }
  return out;
}

}  // namespace detail

template <class Scalar>
ModelInputs<Scalar> make_model_inputs(const CsrMatrix<double>& a,
                                      const FeatureBundle<Scalar>& bundle) {
  check_bundle(bundle);
  if (a.rows != a.cols || a.rows != bundle.n)
    throw ContractError("make_model_inputs: adjacency " + shape_str(a.rows, a.cols) +
                        " does not match bundle n=" + std::to_string(bundle.n));
  ModelInputs<Scalar> in;
  in.n = bundle.n;
  in.d = bundle.d;
  in.k = bundle.k;
  in.x = bundle.channel({ChannelFamily::raw_x, 0});
  in.a = a.template cast<Scalar>();
  in.at = transpose(in.a);
  in.aund = to_undirected(in.a);
  in.gnn_dir = detail::stack_family(bundle, ChannelFamily::dir, ChannelFamily::dir_loop);
  in.gnn_trans = detail::stack_family(bundle, ChannelFamily::trans, ChannelFamily::trans_loop);
  in.gnn_und =
      detail::stack_family(bundle, ChannelFamily::und_norm, ChannelFamily::und_norm_loop);
  return in;
}

// Restricts GNN branch inputs to the first k_use hops. The hop-ascending
// pair layout makes this a column prefix of width 2*k_use*d.
template <class Scalar>
ModelInputs<Scalar> narrow_inputs(const ModelInputs<Scalar>& in, int k_use) {
  if (k_use < 1 || k_use > in.k)
    throw ParamError("narrow_inputs: k_use must be in [1, " + std::to_string(in.k) + "], got " +
                     std::to_string(k_use));
  ModelInputs<Scalar> r = in;
  r.k = k_use;
  const Index w = Index(2 * k_use) * in.d;
  r.gnn_dir = in.gnn_dir.leftCols(w);
  r.gnn_trans = in.gnn_trans.leftCols(w);
  r.gnn_und = in.gnn_und.leftCols(w);
  return r;
}

// Row-aligned slice of the model inputs for one node subset. `rows` keeps the
// global node ids in batch order.
template <class Scalar>
struct Batch {
  std::vector<Index> rows;
  Mat<Scalar> x, gnn_dir, gnn_trans, gnn_und;
  CsrMatrix<Scalar> a, at, aund;
};

template <class Scalar>
Batch<Scalar> gather_batch(const ModelInputs<Scalar>& in, const std::vector<Index>& rows) {
  if (rows.empty()) throw ParamError("gather_batch: empty row set");
  Batch<Scalar> b;
  b.rows = rows;
  b.x = gather_rows(in.x, rows);
  b.gnn_dir = gather_rows(in.gnn_dir, rows);
  b.gnn_trans = gather_rows(in.gnn_trans, rows);
  b.gnn_und = gather_rows(in.gnn_und, rows);
  b.a = gather_rows(in.a, rows);
  b.at = gather_rows(in.at, rows);
  b.aund = gather_rows(in.aund, rows);
  return b;
}

// --- forward / backward ------------------------------------------------

template <class Scalar>
struct ModelCache {
  bool valid = false;
  std::array<MlpCache<Scalar>, kNumBranches> branch_cache;
  std::array<Mat<Scalar>, kNumBranches> branch_out;  // only active entries filled
  Mat<Scalar> concat_pre;   // concatenated branch outputs, before activation
  Mat<Scalar> drop_mask;    // concat-level dropout mask
  MlpCache<Scalar> final_cache;
};

namespace detail {

template <class Scalar>
void check_batch_alignment(const Batch<Scalar>& b) {
  const Index m = b.x.rows();
  if (b.gnn_dir.rows() != m || b.gnn_trans.rows() != m || b.gnn_und.rows() != m ||
      b.a.rows != m || b.at.rows != m || b.aund.rows != m)
    throw ShapeError("batch pieces are not row-aligned");
}

}  // namespace detail

// Evaluates active branches in Branch order, concatenates, applies
// ReLU + dropout, and runs the final MLP. Pass rng = nullptr for inference.
template <class Scalar>
Mat<Scalar> a2dug_forward(const ModelParams<Scalar>& p, const Batch<Scalar>& b,
                          const VariantMask& mask, double dropout, RngStream* rng,
                          ModelCache<Scalar>* cache = nullptr) {
  detail::check_batch_alignment(b);
  if (p.final_mlp.in_dim() != p.hyper.hidden * mask.num_active())
    throw ContractError("a2dug_forward: final MLP expects " +
                        std::to_string(p.final_mlp.in_dim()) + " inputs but mask '" +
                        mask.name + "' yields " +
                        std::to_string(p.hyper.hidden * mask.num_active()));
  const Index m = b.x.rows();
  const Index h = p.hyper.hidden;
  if (cache) *cache = {};

  Mat<Scalar> concat(m, h * mask.num_active());
  Index off = 0;
  for (int bi = 0; bi < kNumBranches; ++bi) {
    if (!mask.active[std::size_t(bi)]) continue;
    const MlpParams<Scalar>& mp = p.branch[std::size_t(bi)];
    MlpCache<Scalar>* bc = cache ? &cache->branch_cache[std::size_t(bi)] : nullptr;
    Mat<Scalar> out;
    switch (Branch(bi)) {
      case Branch::feat: out = mlp_forward(mp, b.x, dropout, rng, bc); break;
      case Branch::adj_dir: out = mlp_forward(mp, b.a, dropout, rng, bc); break;
      case Branch::adj_trans: out = mlp_forward(mp, b.at, dropout, rng, bc); break;
      case Branch::adj_und: out = mlp_forward(mp, b.aund, dropout, rng, bc); break;
      case Branch::agg_dir: out = mlp_forward(mp, b.gnn_dir, dropout, rng, bc); break;
      case Branch::agg_trans: out = mlp_forward(mp, b.gnn_trans, dropout, rng, bc); break;
      case Branch::agg_und: out = mlp_forward(mp, b.gnn_und, dropout, rng, bc); break;
    }
    concat.middleCols(off, h) = out;
    if (cache) cache->branch_out[std::size_t(bi)] = std::move(out);
    off += h;
  }

  Mat<Scalar> mask_m = detail::dropout_mask<Scalar>(m, concat.cols(), dropout, rng);
  Mat<Scalar> act = concat.cwiseMax(Scalar(0)).cwiseProduct(mask_m);
  if (cache) {
    cache->concat_pre = concat;
    cache->drop_mask = std::move(mask_m);
  }
  Mat<Scalar> logits =
      mlp_forward(p.final_mlp, act, dropout, rng, cache ? &cache->final_cache : nullptr);
  if (cache) cache->valid = true;
  return logits;
}

template <class Scalar>
struct ModelGrads {
  std::array<MlpGrads<Scalar>, kNumBranches> branch;
  MlpGrads<Scalar> final_grads;
};

// Exact gradients for every active branch; inactive branches get zero grads
// of the matching shapes.
template <class Scalar>
ModelGrads<Scalar> a2dug_backward(const ModelParams<Scalar>& p, const VariantMask& mask,
                                  ModelCache<Scalar>& cache, const Mat<Scalar>& grad_logits) {
  if (!cache.valid) throw ContractError("a2dug_backward: cache is stale");
  cache.valid = false;
  ModelGrads<Scalar> g;
  g.final_grads = mlp_backward(p.final_mlp, cache.final_cache, grad_logits);

  // Through concat-level dropout and ReLU.
  Mat<Scalar> d_concat =
      g.final_grads.d_input.cwiseProduct(cache.drop_mask)
          .cwiseProduct(
              (cache.concat_pre.array() > Scalar(0)).template cast<Scalar>().matrix());

  const Index h = p.hyper.hidden;
  Index off = 0;
  for (int bi = 0; bi < kNumBranches; ++bi) {
    if (!mask.active[std::size_t(bi)]) {
      g.branch[std::size_t(bi)].layers = zeros_like(p.branch[std::size_t(bi)].layers);
      continue;
    }
    const Mat<Scalar> d_out = d_concat.middleCols(off, h);
    g.branch[std::size_t(bi)] =
        mlp_backward(p.branch[std::size_t(bi)], cache.branch_cache[std::size_t(bi)], d_out);
    off += h;
  }
  return g;
}

// --- checkpoint ---------------------------------------------------------
//
// manifest.json (hyper, mask, dims, init seed, tensor table with checksums)
// plus one row-major little-endian float32 file per tensor.

inline void save_checkpoint(const fs::path& dir, const ModelParams<float>& params) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "a2dug-checkpoint-v1";
  manifest["mask"] = params.mask.name;
  manifest["n"] = params.n;
  manifest["d"] = params.d;
  manifest["y"] = params.y;
  manifest["init_seed"] = params.init_seed;
  manifest["hyper"] = {{"hidden", params.hyper.hidden},
                       {"k", params.hyper.k},
                       {"depth_feat", params.hyper.depth_feat},
                       {"depth_adj", params.hyper.depth_adj},
                       {"depth_agg", params.hyper.depth_agg},
                       {"depth_final", params.hyper.depth_final},
                       {"dropout", params.hyper.dropout}};
  manifest["tensors"] = json::array();
  auto& tensors = manifest["tensors"];
  auto dump = [&](const std::string& name, const MatF& t) {
    const std::string file = name + ".bin";
    write_f32(dir / file, t);
    tensors.push_back({{"name", name},
                       {"rows", t.rows()},
                       {"cols", t.cols()},
                       {"file", file},
                       {"checksum", checksum(t)}});
  };
  auto dump_mlp = [&](const std::string& name, const MlpParams<float>& m) {
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
      dump(name + "_L" + std::to_string(li) + "_w", m.layers[li].w);
      dump(name + "_L" + std::to_string(li) + "_b", MatF(m.layers[li].b.transpose()));
    }
  };
  for (int bi = 0; bi < kNumBranches; ++bi)
    dump_mlp(branch_name(Branch(bi)), params.branch[std::size_t(bi)]);
  dump_mlp("final", params.final_mlp);
  write_json_file(dir / "manifest.json", manifest);
}

inline ModelParams<float> load_checkpoint(const fs::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  if (manifest.at("format").get<std::string>() != "a2dug-checkpoint-v1")
    throw IoError("checkpoint manifest: unknown format in " + (dir / "manifest.json").string());
  ModelParams<float> p;
  p.mask = VariantMask::from_name(manifest.at("mask").get<std::string>());
  p.n = manifest.at("n").get<Index>();
  p.d = manifest.at("d").get<Index>();
  p.y = manifest.at("y").get<Index>();
  p.init_seed = manifest.at("init_seed").get<std::uint64_t>();
  const json& h = manifest.at("hyper");
  p.hyper.hidden = h.at("hidden").get<Index>();
  p.hyper.k = h.at("k").get<int>();
  p.hyper.depth_feat = h.at("depth_feat").get<int>();
  p.hyper.depth_adj = h.at("depth_adj").get<int>();
  p.hyper.depth_agg = h.at("depth_agg").get<int>();
  p.hyper.depth_final = h.at("depth_final").get<int>();
  p.hyper.dropout = h.at("dropout").get<double>();

  std::map<std::string, MatF> tensors;
  for (const auto& t : manifest.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    MatF m = read_f32(dir / t.at("file").get<std::string>(), t.at("rows").get<Index>(),
                      t.at("cols").get<Index>());
    if (checksum(m) != t.at("checksum").get<std::string>())
      throw IoError("checkpoint tensor checksum mismatch: " + name);
    tensors[name] = std::move(m);
  }
  auto take = [&](const std::string& name) -> MatF {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw IoError("checkpoint missing tensor " + name);
    MatF m = std::move(it->second);
    tensors.erase(it);
    return m;
  };
  auto load_mlp = [&](const std::string& name, int depth) {
    MlpParams<float> m;
    for (int li = 0; li < depth; ++li) {
      DenseLayer<float> l;
      l.w = take(name + "_L" + std::to_string(li) + "_w");
      l.b = take(name + "_L" + std::to_string(li) + "_b").row(0).transpose();
      m.layers.push_back(std::move(l));
    }
    return m;
  };
  p.branch[0] = load_mlp("feat", p.hyper.depth_feat);
  for (int bi = 1; bi <= 3; ++bi)
    p.branch[std::size_t(bi)] = load_mlp(branch_name(Branch(bi)), p.hyper.depth_adj);
  for (int bi = 4; bi <= 6; ++bi)
    p.branch[std::size_t(bi)] = load_mlp(branch_name(Branch(bi)), p.hyper.depth_agg);
  p.final_mlp = load_mlp("final", p.hyper.depth_final);
  if (!tensors.empty())
    throw IoError("checkpoint has unexpected extra tensor " + tensors.begin()->first);
  return p;
}

}  // namespace a2dug
