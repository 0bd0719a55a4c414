// One-time k-hop feature aggregation.
//
// Six propagation families are derived from a directed binary adjacency A:
//   dir            A^i X            raw directed hops
//   dir_loop       (A+I)^i X        directed hops with self-loops
//   trans          (A^T)^i X        reversed-edge hops
//   trans_loop     (A^T+I)^i X      reversed-edge hops with self-loops
//   und_norm       S^i X            symmetrically normalized undirected hops
//   und_norm_loop  S_hat^i X        same, with self-loops added before
//                                   normalization (degrees recomputed)
//
// Powers are true matrix powers: each hop multiplies the same family matrix
// into the previous hop's channel. All propagation runs in 64-bit reals and
// is downcast to the requested output precision only when the bundle is
// assembled. Column blocking processes X in slices of block_cols features;
// per-element arithmetic is identical, so blocked output is bitwise equal
// to unblocked output.

#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "a2dug/common.hpp"
#include "a2dug/io_util.hpp"
#include "a2dug/sparse.hpp"

namespace a2dug {

enum class ChannelFamily : int {
  raw_x = 0,
  dir,
  dir_loop,
  trans,
  trans_loop,
  und_norm,
  und_norm_loop,
};

constexpr std::array<ChannelFamily, 6> kAggregatedFamilies = {
    ChannelFamily::dir,       ChannelFamily::dir_loop,      ChannelFamily::trans,
    ChannelFamily::trans_loop, ChannelFamily::und_norm,     ChannelFamily::und_norm_loop,
};

inline std::string family_name(ChannelFamily f) {
  switch (f) {
    case ChannelFamily::raw_x: return "raw_x";
    case ChannelFamily::dir: return "dir";
    case ChannelFamily::dir_loop: return "dir_loop";
    case ChannelFamily::trans: return "trans";
    case ChannelFamily::trans_loop: return "trans_loop";
    case ChannelFamily::und_norm: return "und_norm";
    case ChannelFamily::und_norm_loop: return "und_norm_loop";
  }
  throw ParamError("family_name: unknown family");
}

inline ChannelFamily parse_family(const std::string& s) {
  for (int i = 0; i <= int(ChannelFamily::und_norm_loop); ++i)
    if (family_name(ChannelFamily(i)) == s) return ChannelFamily(i);
  throw ParamError("parse_family: unknown family '" + s + "'");
}

struct ChannelTag {
  ChannelFamily family = ChannelFamily::raw_x;
  int hop = 0;  // 0 only for raw_x; >= 1 otherwise

  bool operator==(const ChannelTag&) const = default;
};

inline std::string tag_name(ChannelTag t) {
  if (t.family == ChannelFamily::raw_x) return "raw_x";
  return family_name(t.family) + "_h" + std::to_string(t.hop);
}

// Canonical bundle order: raw_x first, then each aggregated family with
// hops ascending. A full bundle holds 6k + 1 channels.
inline std::vector<ChannelTag> canonical_tags(int k) {
  std::vector<ChannelTag> tags;
  tags.push_back({ChannelFamily::raw_x, 0});
  for (ChannelFamily f : kAggregatedFamilies)
    for (int h = 1; h <= k; ++h) tags.push_back({f, h});
  return tags;
}

template <class Scalar>
struct FeatureBundle {
  Index n = 0;
  Index d = 0;
  int k = 0;
  std::vector<std::pair<ChannelTag, Mat<Scalar>>> channels;

  const Mat<Scalar>& channel(ChannelTag t) const {
    for (const auto& [tag, m] : channels)
      if (tag == t) return m;
    throw ParamError("bundle has no channel " + tag_name(t));
  }
};

template <class Scalar>
void check_bundle(const FeatureBundle<Scalar>& b) {
  const auto tags = canonical_tags(b.k);
  if (b.channels.size() != tags.size())
    throw ContractError("bundle: expected " + std::to_string(tags.size()) + " channels, has " +
                        std::to_string(b.channels.size()));
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!(b.channels[i].first == tags[i]))
      throw ContractError("bundle: channel " + std::to_string(i) + " out of canonical order");
    const auto& m = b.channels[i].second;
    if (m.rows() != b.n || m.cols() != b.d)
      throw ContractError("bundle: channel " + tag_name(tags[i]) + " has shape " +
                          shape_str(m.rows(), m.cols()) + ", want " + shape_str(b.n, b.d));
  }
}

namespace detail {

// The six family matrices, built once per precomputation.
struct PropagationSet {
  CsrMatrix<double> dir, dir_loop, trans, trans_loop, und_norm, und_norm_loop;

  explicit PropagationSet(const CsrMatrix<double>& a) {
    if (a.rows != a.cols)
      throw ShapeError("precompute: adjacency must be square (got " +
                       shape_str(a.rows, a.cols) + ")");
    dir = a;
    dir_loop = add_self_loops(a);
    trans = transpose(a);
    trans_loop = add_self_loops(trans);
    const CsrMatrix<double> und = to_undirected(a);
    und_norm = degree_normalize(und, degrees(und));
    const CsrMatrix<double> und_loop = add_self_loops(und);
    und_norm_loop = degree_normalize(und_loop, degrees(und_loop));
  }

  const CsrMatrix<double>& matrix(ChannelFamily f) const {
    switch (f) {
      case ChannelFamily::dir: return dir;
      case ChannelFamily::dir_loop: return dir_loop;
      case ChannelFamily::trans: return trans;
      case ChannelFamily::trans_loop: return trans_loop;
      case ChannelFamily::und_norm: return und_norm;
      case ChannelFamily::und_norm_loop: return und_norm_loop;
      default: throw ParamError("no propagation matrix for raw_x");
    }
  }
};

// Runs both recurrences of a loop-paired family group on x, emitting
// channels in equation order: M x, M_hat x, M^2 x, M_hat^2 x, ...
inline std::vector<std::pair<ChannelTag, MatD>> propagate_pair(
    const CsrMatrix<double>& plain, const CsrMatrix<double>& loop, ChannelFamily plain_family,
    ChannelFamily loop_family, const MatD& x, int k) {
  if (k < 1) throw ParamError("precompute: k must be >= 1");
  if (plain.cols != x.rows())
    throw ShapeError("precompute: adjacency " + shape_str(plain.rows, plain.cols) +
                     " incompatible with features " + shape_str(x.rows(), x.cols()));
  std::vector<std::pair<ChannelTag, MatD>> out;
  out.reserve(std::size_t(2 * k));
  MatD cur_plain = x;
  MatD cur_loop = x;
  for (int h = 1; h <= k; ++h) {
    cur_plain = spmm(plain, cur_plain);
    cur_loop = spmm(loop, cur_loop);
    out.push_back({{plain_family, h}, cur_plain});
    out.push_back({{loop_family, h}, cur_loop});
  }
  return out;
}

}  // namespace detail

// Channels AX, (A+I)X, A^2 X, (A+I)^2 X, ..., up to hop k.
inline std::vector<std::pair<ChannelTag, MatD>> precompute_directed(const CsrMatrix<double>& a,
                                                                    const MatD& x, int k) {
  detail::PropagationSet p(a);
  return detail::propagate_pair(p.dir, p.dir_loop, ChannelFamily::dir, ChannelFamily::dir_loop,
                                x, k);
}

// Same recurrences on the transposed graph.
inline std::vector<std::pair<ChannelTag, MatD>> precompute_transposed(const CsrMatrix<double>& a,
                                                                      const MatD& x, int k) {
  detail::PropagationSet p(a);
  return detail::propagate_pair(p.trans, p.trans_loop, ChannelFamily::trans,
                                ChannelFamily::trans_loop, x, k);
}

// Degree-normalized undirected channels S^i X and S_hat^i X.
inline std::vector<std::pair<ChannelTag, MatD>> precompute_undirected(const CsrMatrix<double>& a,
                                                                      const MatD& x, int k) {
  detail::PropagationSet p(a);
  return detail::propagate_pair(p.und_norm, p.und_norm_loop, ChannelFamily::und_norm,
                                ChannelFamily::und_norm_loop, x, k);
}

// Assembles the full canonical bundle, optionally processing X in column
// blocks of width block_cols (memory-bounded mode; bitwise identical output).
template <class Out = float>
FeatureBundle<Out> precompute_all(const CsrMatrix<double>& a, const MatD& x, int k,
                                  std::optional<Index> block_cols = std::nullopt) {
  if (k < 1) throw ParamError("precompute_all: k must be >= 1");
  const Index d = x.cols();
  if (block_cols && (*block_cols < 1 || *block_cols > d))
    throw ParamError("precompute_all: block_cols must be in [1, " + std::to_string(d) +
                     "], got " + std::to_string(*block_cols));
  detail::PropagationSet prop(a);

  FeatureBundle<Out> bundle;
  bundle.n = x.rows();
  bundle.d = d;
  bundle.k = k;
  for (ChannelTag t : canonical_tags(k))
    bundle.channels.push_back({t, Mat<Out>(x.rows(), d)});

  auto channel_ref = [&](ChannelTag t) -> Mat<Out>& {
    for (auto& [tag, m] : bundle.channels)
      if (tag == t) return m;
    throw ContractError("precompute_all: missing channel slot");
  };

  const Index width = block_cols.value_or(d);
  for (Index c0 = 0; c0 < d; c0 += width) {
    const Index w = std::min(width, d - c0);
    const MatD xb = x.middleCols(c0, w);
    channel_ref({ChannelFamily::raw_x, 0}).middleCols(c0, w) = xb.cast<Out>();
    for (std::size_t f = 0; f < kAggregatedFamilies.size(); f += 2) {
      const ChannelFamily plain = kAggregatedFamilies[f];
      const ChannelFamily loop = kAggregatedFamilies[f + 1];
      auto chans = detail::propagate_pair(prop.matrix(plain), prop.matrix(loop), plain, loop,
                                          xb, k);
      for (const auto& [tag, m] : chans)
        channel_ref(tag).middleCols(c0, w) = m.template cast<Out>();
    }
  }
  return bundle;
}

// --- bundle serialization -------------------------------------------------
//
// One row-major little-endian float32 file per channel plus manifest.json
// recording n, d, k, precision, the tag order, and a checksum per channel.

inline void save_bundle(const fs::path& dir, const FeatureBundle<float>& b) {
  check_bundle(b);
  fs::create_directories(dir);
  json manifest;
  manifest["n"] = b.n;
  manifest["d"] = b.d;
  manifest["k"] = b.k;
  manifest["precision"] = "float32";
  manifest["channels"] = json::array();
  int i = 0;
  for (const auto& [tag, m] : b.channels) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d", i++);
    const std::string file = std::string("c") + buf + "_" + tag_name(tag) + ".bin";
    write_f32(dir / file, m);
    manifest["channels"].push_back({{"family", family_name(tag.family)},
                                    {"hop", tag.hop},
                                    {"file", file},
                                    {"checksum", checksum(m)}});
  }
  write_json_file(dir / "manifest.json", manifest);
}

inline FeatureBundle<float> load_bundle(const fs::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  FeatureBundle<float> b;
  b.n = manifest.at("n").get<Index>();
  b.d = manifest.at("d").get<Index>();
  b.k = manifest.at("k").get<int>();
  if (manifest.at("precision").get<std::string>() != "float32")
    throw IoError("bundle manifest: unsupported precision in " +
                  (dir / "manifest.json").string());
  for (const auto& c : manifest.at("channels")) {
    ChannelTag tag{parse_family(c.at("family").get<std::string>()), c.at("hop").get<int>()};
    const std::string file = c.at("file").get<std::string>();
    Mat<float> m = read_f32(dir / file, b.n, b.d);
    if (checksum(m) != c.at("checksum").get<std::string>())
      throw IoError("bundle channel checksum mismatch: " + (dir / file).string());
    b.channels.push_back({tag, std::move(m)});
  }
  check_bundle(b);
  return b;
}

}  // namespace a2dug
