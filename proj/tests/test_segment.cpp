#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "sgt/errors.hpp"
#include "sgt/segment.hpp"
#include "sgt/shapes.hpp"
#include "support.hpp"

using namespace sgt;

namespace {

graph::MeshGraph disjoint_spheres(int count) {
  mesh::TriMesh all = shapes::icosphere(1, 1.0);
  for (int i = 1; i < count; ++i) {
    all = shapes::merged(all, shapes::icosphere(1 + i % 2, 1.0, Eigen::RowVector3d(3.0 * i, 0, 0)));
  }
  return mesh::to_graph(all);
}

// Same partition up to renaming of cluster ids.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> forward, backward;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (auto [it, fresh] = forward.emplace(a[i], b[i]); !fresh && it->second != b[i]) return false;
    if (auto [it, fresh] = backward.emplace(b[i], a[i]); !fresh && it->second != a[i]) return false;
  }
  return true;
}

graph::MeshGraph permuted(const graph::MeshGraph& g, const std::vector<int>& perm) {
  std::vector<graph::Edge> edges;
  for (const auto& [a, b] : g.edges) edges.emplace_back(perm[a], perm[b]);
  return graph::graph_from_edges(g.num_vertices(), edges);
}

}  // namespace

TEST_CASE("disjoint components are recovered exactly") {
  for (int K : {2, 3, 4}) {
    const auto g = disjoint_spheres(K);
    std::vector<int> components;
    REQUIRE(graph::connected_components(g, &components) == K);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto a = segment::segment(g, K, seed);
      CHECK(same_partition(a.labels, components));
      CHECK(a.converged);
    }
  }
}

TEST_CASE("K = 1 labels everything 0") {
  const auto g = testing::random_mesh_graph(5, 5, 1);
  const auto a = segment::segment(g, 1, 3);
  CHECK(a.K == 1);
  CHECK(std::ranges::all_of(a.labels, [](int l) { return l == 0; }));
}

TEST_CASE("argument errors") {
  const auto g = testing::random_mesh_graph(3, 3, 1);
  CHECK_THROWS_AS(segment::segment(g, 10, 0), ArgumentError);
  CHECK_THROWS_AS(segment::segment(g, 0, 0), ArgumentError);
  segment::SegmentOptions narrow;
  narrow.n_eigvecs = 2;
  CHECK_THROWS_AS(segment::segment(g, 3, 0, narrow), ArgumentError);
}

TEST_CASE("hand template with K = 7") {
  const auto g = mesh::to_graph(shapes::hand_template());
  const auto a = segment::segment(g, 7, 0);
  const auto sizes = a.cluster_sizes();
  REQUIRE(sizes.size() == 7);
  for (int s : sizes) CHECK(s > 0);
  CHECK(a.size() == 4023);
  const auto b = segment::segment(g, 7, 0);
  CHECK(a.labels == b.labels);
}

TEST_CASE("segment is invariant to vertex relabeling") {
  const auto g = testing::random_mesh_graph(5, 10, 8);
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    std::vector<int> perm(g.num_vertices());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(trial);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto base = segment::segment(g, 4, 11);
    const auto moved = segment::segment(permuted(g, perm), 4, 11);
    std::vector<int> pulled_back(g.num_vertices());
    for (int v = 0; v < g.num_vertices(); ++v) pulled_back[v] = moved.labels[perm[v]];
    CHECK(same_partition(base.labels, pulled_back));
  }
}

TEST_CASE("row normalization option still yields K non-empty clusters") {
  const auto g = testing::random_mesh_graph(6, 8, 2);
  segment::SegmentOptions opts;
  opts.row_normalize = true;
  opts.n_eigvecs = 5;
  const auto a = segment::segment(g, 3, 0, opts);
  for (int s : a.cluster_sizes()) CHECK(s > 0);
}

TEST_CASE("kmeans empty-cluster repair and iteration cap") {
  SUBCASE("duplicated points still give K non-empty clusters") {
    Eigen::MatrixXd pts = Eigen::MatrixXd::Zero(6, 2);
    pts(5, 0) = 1.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto a = segment::kmeans(pts, 3, seed);
      for (int s : a.cluster_sizes()) CHECK(s > 0);
    }
  }
  SUBCASE("iteration cap reports non-convergence") {
    std::mt19937_64 rng(3);
    const Eigen::MatrixXd pts = testing::random_matrix(200, 2, rng);
    segment::KMeansOptions opts;
    opts.max_iterations = 1;
    const auto a = segment::kmeans(pts, 5, 0, opts);
    CHECK_FALSE(a.converged);
    for (int s : a.cluster_sizes()) CHECK(s > 0);
  }
}

TEST_CASE("cluster_feature_broadcast") {
  SUBCASE("K = 1, C = 2") {
    Eigen::MatrixXd features(1, 2);
    features << 0.5, -2.0;
    Eigen::MatrixXd pos(3, 3);
    pos << 1, 2, 3, 4, 5, 6, 7, 8, 9;
    const auto t = segment::cluster_feature_broadcast({0, 0, 0}, features, pos);
    REQUIRE(t.cols() == 5);
    for (int i = 0; i < 3; ++i) {
      CHECK(t(i, 0) == 0.5);
      CHECK(t(i, 1) == -2.0);
      CHECK(t.row(i).tail(3) == pos.row(i));
    }
  }
  SUBCASE("804 tokens of width 259") {
    std::vector<int> labels(804);
    for (int i = 0; i < 804; ++i) labels[i] = i % 7;
    const auto t = segment::cluster_feature_broadcast(labels, Eigen::MatrixXd::Ones(7, 256),
                                                      Eigen::MatrixXd::Zero(804, 3));
    CHECK(t.rows() == 804);
    CHECK(t.cols() == 259);
  }
  SUBCASE("renaming clusters together with feature rows changes nothing") {
    std::mt19937_64 rng(5);
    const int K = 6, C = 4, n = 40;
    const Eigen::MatrixXd features = testing::random_matrix(K, C, rng);
    const Eigen::MatrixXd pos = testing::random_matrix(n, 3, rng);
    std::vector<int> labels(n);
    for (int& l : labels) l = static_cast<int>(rng() % K);
    const auto base = segment::cluster_feature_broadcast(labels, features, pos);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int> perm(K);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      Eigen::MatrixXd moved_features(K, C);
      std::vector<int> moved_labels(n);
      for (int k = 0; k < K; ++k) moved_features.row(perm[k]) = features.row(k);
      for (int i = 0; i < n; ++i) moved_labels[i] = perm[labels[i]];
      CHECK(segment::cluster_feature_broadcast(moved_labels, moved_features, pos) == base);
    }
  }
  SUBCASE("a row depends only on its own cluster") {
    Eigen::MatrixXd features = Eigen::MatrixXd::Ones(3, 2);
    Eigen::MatrixXd pos = Eigen::MatrixXd::Zero(3, 3);
    const auto before = segment::cluster_feature_broadcast({0, 1, 2}, features, pos);
    features.row(2) *= 9.0;
    const auto after = segment::cluster_feature_broadcast({0, 1, 2}, features, pos);
    CHECK(before.row(0) == after.row(0));
    CHECK(before.row(1) == after.row(1));
    CHECK(before.row(2) != after.row(2));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(segment::cluster_feature_broadcast({0, 0}, Eigen::MatrixXd::Ones(1, 2),
                                                       Eigen::MatrixXd::Zero(3, 3)),
                    ArgumentError);
    CHECK_THROWS_AS(segment::cluster_feature_broadcast({0, 4}, Eigen::MatrixXd::Ones(1, 2),
                                                       Eigen::MatrixXd::Zero(2, 3)),
                    ArgumentError);
  }
}

TEST_CASE("cluster JSON") {
  segment::ClusterAssignment a;
  a.K = 3;
  a.labels = {0, 2, 1, 1};
  const std::string text = segment::to_json(a);
  CHECK(text == "{\"K\":3,\"labels\":[0,2,1,1]}\n");
  const auto back = segment::from_json(text);
  CHECK(back.K == 3);
  CHECK(back.labels == a.labels);
  CHECK_THROWS_AS(segment::from_json("{\"K\":2,\"labels\":[0,5]}"), ParseError);
  CHECK_THROWS_AS(segment::from_json("not json"), ParseError);
}
