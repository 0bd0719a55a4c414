// Dataset model, on-disk format, split generation, and synthetic generators.
//
// Directory layout:
//   edges.csv      "src,dst" header, one directed edge per line
//   labels.csv     "node,label" header, one line per node
//   features.bin   row-major little-endian float32, n x d
//   features.json  {n, d, dtype, checksum}
// splits.json is a JSON array with one [train, val, test] triple of index
// arrays per split.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "a2dug/common.hpp"
#include "a2dug/io_util.hpp"
#include "a2dug/rng.hpp"
#include "a2dug/sparse.hpp"

namespace a2dug {

struct Dataset {
  CsrMatrix<double> a;  // directed, binary
  MatF x;
  Labels labels;
  Index num_classes = 0;
  std::string name;
};

inline void check_dataset(const Dataset& ds) {
  const Index n = ds.a.rows;
  if (ds.a.cols != n) throw ContractError("dataset: adjacency not square");
  if (ds.x.rows() != n)
    throw ContractError("dataset: features have " + std::to_string(ds.x.rows()) +
                        " rows for n=" + std::to_string(n));
  if (ds.labels.size() != n)
    throw ContractError("dataset: " + std::to_string(ds.labels.size()) + " labels for n=" +
                        std::to_string(n));
  for (Index i = 0; i < n; ++i)
    if (ds.labels[i] < 0 || ds.labels[i] >= ds.num_classes)
      throw ContractError("dataset: label " + std::to_string(ds.labels[i]) + " at node " +
                          std::to_string(i) + " outside [0, " +
                          std::to_string(ds.num_classes) + ")");
  if (!all_finite(ds.x)) throw ContractError("dataset: non-finite feature entries");
}

// --- save / load --------------------------------------------------------

inline void save_dataset(const fs::path& dir, const Dataset& ds) {
  check_dataset(ds);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "edges.csv", std::ios::binary);
    if (!f) throw IoError("cannot open " + (dir / "edges.csv").string() + " for writing");
    f << "src,dst\n";
    for (Index r = 0; r < ds.a.rows; ++r)
      for (Index e = ds.a.row_ptr[std::size_t(r)]; e < ds.a.row_ptr[std::size_t(r) + 1]; ++e)
        f << r << "," << ds.a.col_idx[std::size_t(e)] << "\n";
    if (!f) throw IoError("short write to " + (dir / "edges.csv").string());
  }
  {
    std::ofstream f(dir / "labels.csv", std::ios::binary);
    if (!f) throw IoError("cannot open " + (dir / "labels.csv").string() + " for writing");
    f << "node,label\n";
    for (Index i = 0; i < ds.labels.size(); ++i) f << i << "," << ds.labels[i] << "\n";
    if (!f) throw IoError("short write to " + (dir / "labels.csv").string());
  }
  write_f32(dir / "features.bin", ds.x);
  write_json_file(dir / "features.json", json{{"n", ds.x.rows()},
                                              {"d", ds.x.cols()},
                                              {"dtype", "float32"},
                                              {"checksum", checksum(ds.x)}});
}

namespace detail {

// Parses one "<int>,<int>" CSV line; errors carry file and line number.
inline std::pair<long long, long long> parse_int_pair(const std::string& line,
                                                      const fs::path& file, long long lineno) {
  const auto fail = [&](const std::string& why) {
    throw IoError(file.string() + ":" + std::to_string(lineno) + ": " + why + " ('" + line +
                  "')");
  };
  const auto comma = line.find(',');
  if (comma == std::string::npos) fail("expected two comma-separated integers");
  std::size_t used = 0;
  long long a = 0, b = 0;
  try {
    a = std::stoll(line.substr(0, comma), &used);
    if (used != comma) fail("trailing characters in first field");
    const std::string rest = line.substr(comma + 1);
    b = std::stoll(rest, &used);
    if (used != rest.size()) fail("trailing characters in second field");
  } catch (const std::exception&) {
    fail("not an integer");
  }
  return {a, b};
}

inline std::vector<std::string> read_csv_lines(const fs::path& file,
                                               const std::string& expect_header) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw IoError("cannot open " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.empty() || lines[0] != expect_header)
    throw IoError(file.string() + ":1: expected header '" + expect_header + "'");
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace detail

inline Dataset load_dataset(const fs::path& dir) {
  const json fman = read_json_file(dir / "features.json");
  const Index n = fman.at("n").get<Index>();
  const Index d = fman.at("d").get<Index>();
  if (fman.at("dtype").get<std::string>() != "float32")
    throw IoError((dir / "features.json").string() + ": unsupported dtype");
  Dataset ds;
  ds.name = dir.filename().string();
  ds.x = read_f32(dir / "features.bin", n, d);
  if (checksum(ds.x) != fman.at("checksum").get<std::string>())
    throw IoError((dir / "features.bin").string() + ": checksum mismatch");

  {
    const fs::path file = dir / "labels.csv";
    const auto lines = detail::read_csv_lines(file, "node,label");
    ds.labels = Labels::Constant(n, -1);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto [node, label] = detail::parse_int_pair(lines[i], file, (long long)(i + 1));
      if (node < 0 || node >= n)
        throw IoError(file.string() + ":" + std::to_string(i + 1) + ": node " +
                      std::to_string(node) + " outside [0, " + std::to_string(n) + ")");
      if (label < 0)
        throw IoError(file.string() + ":" + std::to_string(i + 1) + ": negative label");
      if (ds.labels[Index(node)] != -1)
        throw IoError(file.string() + ":" + std::to_string(i + 1) + ": duplicate node " +
                      std::to_string(node));
      ds.labels[Index(node)] = int(label);
    }
    for (Index i = 0; i < n; ++i)
      if (ds.labels[i] == -1)
        throw IoError(file.string() + ": no label for node " + std::to_string(i));
    ds.num_classes = ds.labels.maxCoeff() + 1;
  }
  {
    const fs::path file = dir / "edges.csv";
    const auto lines = detail::read_csv_lines(file, "src,dst");
    std::vector<std::pair<Index, Index>> edges;
    edges.reserve(lines.size());
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto [src, dst] = detail::parse_int_pair(lines[i], file, (long long)(i + 1));
      if (src < 0 || src >= n || dst < 0 || dst >= n)
        throw IoError(file.string() + ":" + std::to_string(i + 1) + ": endpoint (" +
                      std::to_string(src) + ", " + std::to_string(dst) + ") outside [0, " +
                      std::to_string(n) + ")");
      edges.push_back({Index(src), Index(dst)});
    }
    ds.a = CsrMatrix<double>::from_edges(n, edges);  // dedups repeated lines
  }
  check_dataset(ds);
  return ds;
}

// --- splits ---------------------------------------------------------------

struct Split {
  std::vector<Index> train, val, test;
};

using SplitSet = std::vector<Split>;

// `count` independent permutation splits; sizes are llround(n * fraction)
// for train and val, remainder for test (each within 1 of exact).
inline SplitSet make_random_splits(Index n, const std::array<double, 3>& fractions,
                                   int count, std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f <= 0.0) throw ParamError("make_random_splits: fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ParamError("make_random_splits: fractions must sum to 1, got " + std::to_string(sum));
  if (count < 1) throw ParamError("make_random_splits: count must be >= 1");
  if (n < 3) throw ParamError("make_random_splits: need n >= 3");

  const Index n_train = Index(std::llround(fractions[0] * double(n)));
  const Index n_val = Index(std::llround(fractions[1] * double(n)));
  const Index n_test = n - n_train - n_val;
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw ParamError("make_random_splits: a split part would be empty");

  RngStream base(seed, /*stream=*/2);
  SplitSet splits;
  for (int s = 0; s < count; ++s) {
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index(0));
    RngStream rng = base.derive(std::uint64_t(s));
    rng.shuffle(perm);
    Split sp;
    sp.train.assign(perm.begin(), perm.begin() + n_train);
    sp.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    sp.test.assign(perm.begin() + n_train + n_val, perm.end());
    splits.push_back(std::move(sp));
  }
  return splits;
}

inline void save_splits(const fs::path& file, const SplitSet& splits) {
  json j = json::array();
  for (const auto& s : splits) j.push_back({s.train, s.val, s.test});
  write_json_file(file, j);
}

inline SplitSet load_splits(const fs::path& file) {
  const json j = read_json_file(file);
  if (!j.is_array()) throw IoError(file.string() + ": expected a JSON array of splits");
  SplitSet splits;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 3)
      throw IoError(file.string() + ": each split must be [train, val, test]");
    Split s;
    s.train = e[0].get<std::vector<Index>>();
    s.val = e[1].get<std::vector<Index>>();
    s.test = e[2].get<std::vector<Index>>();
    splits.push_back(std::move(s));
  }
  return splits;
}

// --- generators -------------------------------------------------------

// Direction-sensitive labels. Each node draws Poisson(avg_out_degree)
// distinct out-neighbors; features are a constant-1 column plus Gaussian
// noise, so one directed hop reproduces in/out degrees while the undirected
// degree (in + out) carries no information about the label sign(out - in).
// The noise pad uses sigma = 0.5: it must stay subordinate to the unit
// degree-signal column, or the pad doubles as a per-node fingerprint that
// rewards memorizing rows over reading edge direction.
inline Dataset gen_directional(Index n, double avg_out_degree, Index noise_dim,
                               std::uint64_t seed) {
  if (n < 10) throw ParamError("gen_directional: need n >= 10");
  if (avg_out_degree <= 0.0) throw ParamError("gen_directional: avg_out_degree must be > 0");
  if (noise_dim < 0) throw ParamError("gen_directional: noise_dim must be >= 0");
  RngStream rng(seed, /*stream=*/3);

  std::vector<std::pair<Index, Index>> edges;
  for (Index i = 0; i < n; ++i) {
    long long want = rng.poisson(avg_out_degree);
    if (want > n - 1) want = n - 1;
    std::set<Index> targets;
    while ((long long)targets.size() < want) {
      const Index t = Index(rng.uniform_int(std::uint64_t(n)));
      if (t != i) targets.insert(t);
    }
    for (Index t : targets) edges.push_back({i, t});
  }

  Dataset ds;
  ds.name = "directional";
  ds.a = CsrMatrix<double>::from_edges(n, edges);
  ds.x.resize(n, 1 + noise_dim);
  for (Index i = 0; i < n; ++i) {
    ds.x(i, 0) = 1.0f;
    for (Index j = 0; j < noise_dim; ++j) ds.x(i, 1 + j) = float(0.5 * rng.normal());
  }
  const VecD out_deg = degrees(ds.a);
  const VecD in_deg = degrees(transpose(ds.a));
  ds.labels.resize(n);
  for (Index i = 0; i < n; ++i) ds.labels[i] = out_deg[i] >= in_deg[i] ? 1 : 0;
  ds.num_classes = 2;
  check_dataset(ds);
  return ds;
}

// Homophilous stochastic block model with randomly oriented edges. Labels
// are block ids; features are the one-hot block vector plus Gaussian noise
// scaled by feature_noise.
inline Dataset gen_homophilous(Index n, int blocks, double p_in, double p_out,
                               double feature_noise, std::uint64_t seed) {
  if (blocks < 2) throw ParamError("gen_homophilous: need blocks >= 2");
  if (n < blocks) throw ParamError("gen_homophilous: need n >= blocks");
  if (!(p_in > p_out)) throw ParamError("gen_homophilous: need p_in > p_out");
  if (p_in < 0.0 || p_in > 1.0 || p_out < 0.0 || p_out > 1.0)
    throw ParamError("gen_homophilous: probabilities must be in [0, 1]");
  if (feature_noise < 0.0) throw ParamError("gen_homophilous: feature_noise must be >= 0");
  RngStream rng(seed, /*stream=*/4);

  auto block_of = [&](Index i) { return int(i) % blocks; };
  std::vector<std::pair<Index, Index>> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double p = block_of(i) == block_of(j) ? p_in : p_out;
      if (rng.uniform() < p) {
        if (rng.uniform() < 0.5)
          edges.push_back({i, j});
        else
          edges.push_back({j, i});
      }
    }

  Dataset ds;
  ds.name = "homophilous";
  ds.a = CsrMatrix<double>::from_edges(n, edges);
  ds.x = MatF::Zero(n, blocks);
  ds.labels.resize(n);
  for (Index i = 0; i < n; ++i) {
    const int b = block_of(i);
    ds.labels[i] = b;
    ds.x(i, b) = 1.0f;
    for (Index j = 0; j < blocks; ++j) ds.x(i, j) += float(rng.normal() * feature_noise);
  }
  ds.num_classes = blocks;
  check_dataset(ds);
  return ds;
}

// Designated nodes of the collision fixture.
struct CollisionNodes {
  Index p = 0, p_prime = 6, q = 1, q_prime = 7;
};

// Two disjoint 6-node copies wired identically, with per-role features that
// are equal across copies and equal for roles p and q. Consequences:
//   - p and p' have entrywise-equal rows in every aggregated channel (the
//     copies are isomorphic with matching features) but their adjacency rows
//     live on different columns;
//   - q / q' repeat p / p' in adjacency-row pattern and features, yet the
//     copies carry different labels (copy 1 -> 0, copy 2 -> 1).
// Roles per copy: p, q, a, b, c, e at offsets 0..5.
inline std::pair<Dataset, CollisionNodes> gen_collision_fixture(std::uint64_t seed) {
  const Index n = 12;
  const Index per_copy = 6;
  std::vector<std::pair<Index, Index>> edges;
  for (Index o : {Index(0), per_copy}) {
    const Index p = o + 0, q = o + 1, a = o + 2, b = o + 3, c = o + 4, e = o + 5;
    edges.insert(edges.end(),
                 {{p, a}, {p, b}, {q, a}, {q, b}, {a, c}, {b, c}, {c, e}, {e, p}});
  }
  // Per-role features, exactly representable in float32; role q repeats p.
  const std::array<std::array<float, 3>, 6> role_x = {{
      {1.0f, 0.0f, 2.0f},   // p
      {1.0f, 0.0f, 2.0f},   // q (same as p)
      {0.0f, 1.0f, 1.0f},   // a
      {2.0f, 1.0f, 0.0f},   // b
      {1.0f, 1.0f, 1.0f},   // c
      {3.0f, 0.0f, 1.0f},   // e
  }};
  Dataset ds;
  ds.name = "collision_fixture";
  ds.a = CsrMatrix<double>::from_edges(n, edges);
  ds.x.resize(n, 3);
  ds.labels.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& r = role_x[std::size_t(i % per_copy)];
    for (Index j = 0; j < 3; ++j) ds.x(i, j) = r[std::size_t(j)];
    ds.labels[i] = i < per_copy ? 0 : 1;
  }
  ds.num_classes = 2;
  (void)seed;  // structure is fixed; kept for generator-signature uniformity
  check_dataset(ds);
  return {ds, CollisionNodes{}};
}

}  // namespace a2dug
