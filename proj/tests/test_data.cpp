#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "a2dug/data.hpp"
#include "oracle.hpp"

using namespace a2dug;
namespace fs = std::filesystem;

namespace {

void append_line(const fs::path& file, const std::string& line) {
  std::ofstream f(file, std::ios::binary | std::ios::app);
  REQUIRE(f.good());
  f << line << "\n";
}

void rewrite_line(const fs::path& file, std::size_t lineno_1based, const std::string& text) {
  std::ifstream in(file, std::ios::binary);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  in.close();
  REQUIRE(lineno_1based <= lines.size());
  lines[lineno_1based - 1] = text;
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  for (const auto& l : lines) out << l << "\n";
}

std::string io_error_message(const fs::path& dir) {
  try {
    load_dataset(dir);
  } catch (const IoError& e) {
    return e.what();
  }
  return "";
}

bool covers_disjointly(const Split& s, Index n) {
  std::set<Index> seen;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (Index i : *part)
      if (!seen.insert(i).second) return false;
  return Index(seen.size()) == n && *seen.begin() == 0 && *seen.rbegin() == n - 1;
}

}  // namespace

TEST_CASE("dataset save/load round-trips every component bitwise") {
  const Dataset ds = gen_directional(30, 2.0, 3, 5);
  const fs::path dir = "tmp_ds_roundtrip";
  fs::remove_all(dir);
  save_dataset(dir, ds);
  for (const char* f : {"edges.csv", "labels.csv", "features.bin", "features.json"})
    CHECK(fs::exists(dir / f));

  const Dataset back = load_dataset(dir);
  CHECK(back.a == ds.a);
  CHECK(back.x == ds.x);
  CHECK(back.labels == ds.labels);
  CHECK(back.num_classes == ds.num_classes);
  fs::remove_all(dir);
}

TEST_CASE("duplicate edge lines collapse to one stored entry") {
  Dataset ds;
  ds.a = CsrMatrix<double>::from_edges(3, {{0, 1}, {1, 2}});
  ds.x = MatF::Ones(3, 2);
  ds.labels.resize(3);
  ds.labels << 0, 1, 0;
  ds.num_classes = 2;
  const fs::path dir = "tmp_ds_dup";
  fs::remove_all(dir);
  save_dataset(dir, ds);
  append_line(dir / "edges.csv", "0,1");
  append_line(dir / "edges.csv", "0,1");
  const Dataset back = load_dataset(dir);
  CHECK(back.a.nnz() == 2);
  CHECK(back.a == ds.a);
  fs::remove_all(dir);
}

TEST_CASE("malformed dataset files raise IO errors naming file and line") {
  const Dataset ds = gen_directional(12, 1.5, 2, 9);
  const fs::path dir = "tmp_ds_malformed";

  auto fresh = [&]() {
    fs::remove_all(dir);
    save_dataset(dir, ds);
  };

  SUBCASE("wrong edge header") {
    fresh();
    rewrite_line(dir / "edges.csv", 1, "from,to");
    const std::string msg = io_error_message(dir);
    CHECK(msg.find("edges.csv") != std::string::npos);
    CHECK(msg.find(":1") != std::string::npos);
  }
  SUBCASE("non-integer edge field") {
    fresh();
    rewrite_line(dir / "edges.csv", 3, "1,banana");
    const std::string msg = io_error_message(dir);
    CHECK(msg.find("edges.csv:3") != std::string::npos);
  }
  SUBCASE("endpoint out of range") {
    fresh();
    rewrite_line(dir / "edges.csv", 2, "0,99");
    const std::string msg = io_error_message(dir);
    CHECK(msg.find("edges.csv:2") != std::string::npos);
    CHECK(msg.find("99") != std::string::npos);
  }
  SUBCASE("duplicate label row") {
    fresh();
    rewrite_line(dir / "labels.csv", 3, "0,1");  // node 0 labeled twice
    const std::string msg = io_error_message(dir);
    CHECK(msg.find("labels.csv:3") != std::string::npos);
    CHECK(msg.find("duplicate") != std::string::npos);
  }
  SUBCASE("missing label row") {
    fresh();
    rewrite_line(dir / "labels.csv", 13, "");  // blank the last node's label
    const std::string msg = io_error_message(dir);
    CHECK(msg.find("labels.csv") != std::string::npos);
    CHECK(msg.find("no label") != std::string::npos);
  }
  SUBCASE("corrupted feature payload") {
    fresh();
    std::fstream f(dir / "features.bin", std::ios::in | std::ios::out | std::ios::binary);
    char byte = 0;
    f.read(&byte, 1);
    f.seekp(0);
    byte = char(byte ^ 0x01);
    f.write(&byte, 1);
    f.close();
    const std::string msg = io_error_message(dir);
    CHECK(msg.find("features.bin") != std::string::npos);
    CHECK(msg.find("checksum") != std::string::npos);
  }
  SUBCASE("missing directory") {
    fs::remove_all(dir);
    CHECK_THROWS_AS(load_dataset(dir), IoError);
  }
  fs::remove_all(dir);
}

TEST_CASE("random splits have llround sizes, cover the nodes, and reproduce") {
  SUBCASE("even n") {
    const auto splits = make_random_splits(100, {0.5, 0.25, 0.25}, 4, 7);
    REQUIRE(splits.size() == 4);
    for (const auto& s : splits) {
      CHECK(s.train.size() == 50);
      CHECK(s.val.size() == 25);
      CHECK(s.test.size() == 25);
      CHECK(covers_disjointly(s, 100));
    }
    CHECK(splits[0].train != splits[1].train);
  }
  SUBCASE("odd n rounds train and val, remainder to test") {
    const auto splits = make_random_splits(101, {0.5, 0.25, 0.25}, 1, 7);
    CHECK(splits[0].train.size() == 51);  // llround(50.5)
    CHECK(splits[0].val.size() == 25);
    CHECK(splits[0].test.size() == 25);
    CHECK(covers_disjointly(splits[0], 101));
  }
  SUBCASE("same seed gives identical splits, different seed does not") {
    const auto a = make_random_splits(60, {0.5, 0.25, 0.25}, 2, 3);
    const auto b = make_random_splits(60, {0.5, 0.25, 0.25}, 2, 3);
    const auto c = make_random_splits(60, {0.5, 0.25, 0.25}, 2, 4);
    CHECK(a[0].train == b[0].train);
    CHECK(a[1].test == b[1].test);
    CHECK(a[0].train != c[0].train);
  }
  SUBCASE("parameter validation") {
    CHECK_THROWS_AS(make_random_splits(100, {0.5, 0.25, 0.2}, 1, 0), ParamError);
    CHECK_THROWS_AS(make_random_splits(100, {1.0, -0.25, 0.25}, 1, 0), ParamError);
    CHECK_THROWS_AS(make_random_splits(100, {0.5, 0.25, 0.25}, 0, 0), ParamError);
    CHECK_THROWS_AS(make_random_splits(2, {0.5, 0.25, 0.25}, 1, 0), ParamError);
  }
  SUBCASE("splits survive a save/load round trip") {
    const auto splits = make_random_splits(40, {0.5, 0.25, 0.25}, 3, 11);
    const fs::path file = "tmp_splits.json";
    save_splits(file, splits);
    const auto back = load_splits(file);
    REQUIRE(back.size() == splits.size());
    for (std::size_t i = 0; i < splits.size(); ++i) {
      CHECK(back[i].train == splits[i].train);
      CHECK(back[i].val == splits[i].val);
      CHECK(back[i].test == splits[i].test);
    }
    fs::remove(file);
  }
}

TEST_CASE("directional generator: structure, labels, and separability") {
  const Index n = 300;
  const Dataset ds = gen_directional(n, 4.0, 8, 42);
  CHECK(ds.num_classes == 2);
  CHECK(ds.x.cols() == 9);
  CHECK(ds.a.rows == n);

  SUBCASE("deterministic per seed") {
    const Dataset again = gen_directional(n, 4.0, 8, 42);
    CHECK(again.a == ds.a);
    CHECK(again.x == ds.x);
    CHECK(again.labels == ds.labels);
    const Dataset other = gen_directional(n, 4.0, 8, 43);
    CHECK(other.a != ds.a);
  }
  SUBCASE("no self-loops, constant first feature column") {
    const MatD dense = to_dense(ds.a);
    CHECK(dense.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK(ds.x.col(0) == MatF::Ones(n, 1));
  }
  SUBCASE("labels are the out/in degree comparison, recomputed densely") {
    const MatD dense = to_dense(ds.a);
    const VecD out_deg = dense.rowwise().sum();
    const VecD in_deg = dense.colwise().sum().transpose();
    int ones = 0;
    for (Index i = 0; i < n; ++i) {
      CHECK(ds.labels[i] == (out_deg[i] >= in_deg[i] ? 1 : 0));
      ones += ds.labels[i];
    }
    // Both classes must be populated for the gates to mean anything.
    CHECK(ones > n / 10);
    CHECK(ones < n - n / 10);

    // One directed hop on the constant column recovers the degrees, making
    // the task linearly separable from (A X, A^T X) but not from features.
    const MatD x1 = MatD::Ones(n, 1);
    const MatD ax = dense * x1;
    const MatD atx = dense.transpose() * x1;
    for (Index i = 0; i < n; ++i) {
      CHECK(ax(i, 0) == out_deg[i]);
      CHECK(atx(i, 0) == in_deg[i]);
      // Explicit separating rule: sign(out - in + 1/2).
      const int pred = (ax(i, 0) - atx(i, 0) + 0.5) > 0 ? 1 : 0;
      CHECK(pred == ds.labels[i]);
    }
  }
  SUBCASE("parameter validation") {
    CHECK_THROWS_AS(gen_directional(5, 4.0, 8, 1), ParamError);
    CHECK_THROWS_AS(gen_directional(20, 0.0, 8, 1), ParamError);
  }
}

TEST_CASE("homophilous generator: block structure and feature control") {
  SUBCASE("p_out = 0 keeps every edge inside a block") {
    const Dataset ds = gen_homophilous(80, 2, 0.2, 0.0, 0.0, 3);
    const MatD dense = to_dense(ds.a);
    for (Index i = 0; i < 80; ++i)
      for (Index j = 0; j < 80; ++j)
        if (dense(i, j) != 0.0) CHECK(ds.labels[i] == ds.labels[j]);
  }
  SUBCASE("noise-free features are the one-hot label encoding") {
    const Dataset ds = gen_homophilous(60, 3, 0.15, 0.01, 0.0, 4);
    CHECK(ds.num_classes == 3);
    for (Index i = 0; i < 60; ++i) {
      Index argmax = 0;
      ds.x.row(i).maxCoeff(&argmax);
      CHECK(int(argmax) == ds.labels[i]);
      CHECK(ds.x(i, argmax) == 1.0f);
    }
  }
  SUBCASE("intra-block edges dominate at the gate settings") {
    const Dataset ds = gen_homophilous(400, 2, 0.1, 0.005, 1.0, 5);
    const MatD dense = to_dense(ds.a);
    double intra = 0, total = 0;
    for (Index i = 0; i < 400; ++i)
      for (Index j = 0; j < 400; ++j)
        if (dense(i, j) != 0.0) {
          total += 1;
          intra += (ds.labels[i] == ds.labels[j]);
        }
    CHECK(total > 0);
    CHECK(intra / total >= 0.9);
  }
  SUBCASE("deterministic per seed") {
    const Dataset a = gen_homophilous(50, 2, 0.2, 0.02, 0.5, 6);
    const Dataset b = gen_homophilous(50, 2, 0.2, 0.02, 0.5, 6);
    CHECK(a.a == b.a);
    CHECK(a.x == b.x);
  }
  SUBCASE("parameter validation") {
    CHECK_THROWS_AS(gen_homophilous(50, 1, 0.2, 0.01, 0.5, 1), ParamError);
    CHECK_THROWS_AS(gen_homophilous(50, 2, 0.01, 0.2, 0.5, 1), ParamError);
    CHECK_THROWS_AS(gen_homophilous(50, 2, 1.5, 0.01, 0.5, 1), ParamError);
    CHECK_THROWS_AS(gen_homophilous(50, 2, 0.2, 0.01, -1.0, 1), ParamError);
  }
}

TEST_CASE("collision fixture: two isomorphic copies with crossed labels") {
  auto [ds, nodes] = gen_collision_fixture(1);
  CHECK(ds.a.rows == 12);
  CHECK(ds.a.nnz() == 16);  // 8 edges per copy
  CHECK(ds.num_classes == 2);

  // Copies get distinct labels; roles repeat features across copies.
  for (Index i = 0; i < 6; ++i) {
    CHECK(ds.labels[i] == 0);
    CHECK(ds.labels[i + 6] == 1);
    CHECK(ds.x.row(i) == ds.x.row(i + 6));
  }
  CHECK(ds.x.row(nodes.p) == ds.x.row(nodes.q));

  // No edges cross the copies.
  const MatD dense = to_dense(ds.a);
  CHECK(dense.topRightCorner(6, 6).cwiseAbs().maxCoeff() == 0.0);
  CHECK(dense.bottomLeftCorner(6, 6).cwiseAbs().maxCoeff() == 0.0);
  // The two copies are wired identically.
  CHECK(dense.topLeftCorner(6, 6) == dense.bottomRightCorner(6, 6));
}
