#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "sgt/eigensolver.hpp"
#include "sgt/errors.hpp"
#include "sgt/graph.hpp"
#include "sgt/shapes.hpp"
#include "support.hpp"

using namespace sgt;
using graph::MeshGraph;

namespace {

MeshGraph triangle() {
  Points p(3, 3);
  p << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  return graph::build_mesh_graph(p, {{0, 1, 2}});
}

MeshGraph path3() { return graph::graph_from_edges(3, {{0, 1}, {1, 2}}); }

// Independent oracle: Eigen's dense self-adjoint solver.
Eigen::VectorXd oracle_eigenvalues(const graph::Laplacian& l) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(l.matrix));
  return es.eigenvalues();
}

}  // namespace

TEST_CASE("single triangle is K3") {
  const MeshGraph g = triangle();
  const Eigen::MatrixXd a = g.adjacency();
  Eigen::MatrixXd expected = Eigen::MatrixXd::Ones(3, 3) - Eigen::MatrixXd::Identity(3, 3);
  CHECK(a == expected);
  CHECK(g.degree == std::vector<int>{2, 2, 2});
}

TEST_CASE("two triangles sharing an edge") {
  Points p = Points::Zero(4, 3);
  const MeshGraph g = graph::build_mesh_graph(p, {{0, 1, 2}, {1, 3, 2}});
  CHECK(g.degree == std::vector<int>{2, 3, 3, 2});
  CHECK(g.num_edges() == 5);
}

TEST_CASE("structural errors") {
  Points p = Points::Zero(3, 3);
  CHECK_THROWS_AS(graph::build_mesh_graph(p, {{0, 1, 3}}), StructuralError);
  CHECK_THROWS_AS(graph::build_mesh_graph(p, {{0, -1, 2}}), StructuralError);
  CHECK_THROWS_AS(graph::build_mesh_graph(p, {{0, 1, 1}}), StructuralError);
}

TEST_CASE("laplacian definition") {
  const auto edge = graph::laplacian(graph::graph_from_edges(2, {{0, 1}}));
  Eigen::Matrix2d want;
  want << 1, -1, -1, 1;
  CHECK(Eigen::MatrixXd(edge.matrix) == want);

  const Eigen::MatrixXd k3 = graph::laplacian(triangle()).matrix;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(k3(i, j) == (i == j ? 2.0 : -1.0));

  const Eigen::VectorXd ev = oracle_eigenvalues(graph::laplacian(path3()));
  CHECK(ev[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(ev[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ev[2] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("laplacian rows sum to zero and the form is PSD") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const MeshGraph g = testing::random_mesh_graph(4 + trial, 6, 100 + trial);
    const Eigen::MatrixXd l = graph::laplacian(g).matrix;
    CHECK(l.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((l - l.transpose()).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < 100 / 5; ++i) {
      const Eigen::VectorXd x = testing::random_matrix(g.num_vertices(), 1, rng);
      CHECK(x.dot(l * x) >= -1e-9);
    }
    for (int i = 0; i < g.num_vertices(); ++i) CHECK(l(i, i) == g.degree[i]);
  }
}

TEST_CASE("eigendecompose on small graphs") {
  SUBCASE("connected, k = 1 gives the constant vector") {
    const MeshGraph g = testing::random_mesh_graph(5, 5, 3);
    const auto s = graph::eigendecompose(graph::laplacian(g), 1);
    CHECK(std::abs(s.eigenvalues[0]) <= 1e-10);
    const double c = 1.0 / std::sqrt(25.0);
    CHECK((s.eigenvectors.col(0).array() - c).abs().maxCoeff() <= 1e-10);
  }
  SUBCASE("two components give a doubled zero eigenvalue") {
    const MeshGraph g = graph::graph_from_edges(6, {{0, 1}, {1, 2}, {2, 0}, {3, 4}, {4, 5}});
    const auto s = graph::eigendecompose(graph::laplacian(g), 3);
    CHECK(s.eigenvalues[0] <= 1e-8);
    CHECK(s.eigenvalues[1] <= 1e-8);
    CHECK(s.eigenvalues[2] > 1e-8);
  }
  SUBCASE("path P3") {
    const auto s = graph::eigendecompose(graph::laplacian(path3()), 3);
    CHECK(s.eigenvalues[0] == doctest::Approx(0.0));
    CHECK(s.eigenvalues[1] == doctest::Approx(1.0));
    CHECK(s.eigenvalues[2] == doctest::Approx(3.0));
  }
  SUBCASE("argument range") {
    const auto l = graph::laplacian(path3());
    CHECK_THROWS_AS(graph::eigendecompose(l, 0), ArgumentError);
    CHECK_THROWS_AS(graph::eigendecompose(l, 4), ArgumentError);
  }
}

TEST_CASE("eigendecompose matches the dense oracle on a 50-node mesh graph") {
  const MeshGraph g = testing::random_mesh_graph(5, 10, 11);
  const auto l = graph::laplacian(g);
  const auto s = graph::eigendecompose(l, 50);
  const Eigen::VectorXd want = oracle_eigenvalues(l);
  for (int i = 0; i < 50; ++i) CHECK(std::abs(s.eigenvalues[i] - want[i]) <= 1e-6);

  // Spectrum invariants.
  const Eigen::MatrixXd& u = s.eigenvectors;
  CHECK((u.transpose() * u - Eigen::MatrixXd::Identity(50, 50)).cwiseAbs().maxCoeff() <= 1e-8);
  const Eigen::MatrixXd dense = l.matrix;
  for (int i = 0; i < 50; ++i) {
    const double residual = (dense * u.col(i) - s.eigenvalues[i] * u.col(i)).norm();
    CHECK(residual <= 1e-6 * std::max(1.0, s.eigenvalues[i]));
    if (i > 0) CHECK(s.eigenvalues[i] >= s.eigenvalues[i - 1]);
  }
  const Eigen::MatrixXd rebuilt = u * s.eigenvalues.asDiagonal() * u.transpose();
  CHECK((rebuilt - dense).norm() / dense.norm() < 1e-6);

  // Sign convention: first component above 1e-10 is positive.
  for (int c = 0; c < 50; ++c) {
    for (int r = 0; r < 50; ++r) {
      if (std::abs(u(r, c)) > 1e-10) {
        CHECK(u(r, c) > 0);
        break;
      }
    }
  }
}

TEST_CASE("eigendecompose is bitwise deterministic") {
  const MeshGraph g = testing::random_connected_graph(80, 60, 5);
  const auto l = graph::laplacian(g);
  const auto a = graph::eigendecompose(l, 20);
  const auto b = graph::eigendecompose(l, 20);
  CHECK(a.eigenvalues == b.eigenvalues);
  CHECK(a.eigenvectors == b.eigenvectors);
}

TEST_CASE("zero eigenvalue multiplicity equals the component count") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    std::mt19937_64 rng(seed);
    const int n = 40;
    std::vector<graph::Edge> edges;
    std::uniform_int_distribution<int> any(0, n - 1);
    for (int i = 0; i < 28; ++i) {
      const int a = any(rng), b = any(rng);
      if (a != b) edges.emplace_back(a, b);
    }
    const MeshGraph g = graph::graph_from_edges(n, edges);
    const auto s = graph::eigendecompose(graph::laplacian(g), n);
    int zeros = 0;
    for (int i = 0; i < n; ++i) zeros += s.eigenvalues[i] < graph::kZeroEigenvalue;
    CHECK(zeros == testing::union_find_components(n, g.edges));
    CHECK(zeros == graph::connected_components(g));
  }
}

TEST_CASE("sparse path agrees with the dense oracle") {
  const MeshGraph g = testing::random_mesh_graph(30, 45, 21);  // 1350 nodes
  const auto l = graph::laplacian(g);
  const auto s = graph::eigendecompose(l, 10);
  const Eigen::VectorXd want = oracle_eigenvalues(l);
  const Eigen::MatrixXd dense = l.matrix;
  for (int i = 0; i < 10; ++i) {
    CHECK(std::abs(s.eigenvalues[i] - want[i]) <= 1e-8);
    CHECK((dense * s.eigenvectors.col(i) - s.eigenvalues[i] * s.eigenvectors.col(i)).norm() <= 1e-6);
  }
  CHECK((s.eigenvectors.transpose() * s.eigenvectors - Eigen::MatrixXd::Identity(10, 10))
            .cwiseAbs()
            .maxCoeff() <= 1e-8);
}

TEST_CASE("hand template spectrum") {
  const auto g = mesh::to_graph(shapes::hand_template());
  const auto l = graph::laplacian(g);
  const auto s = graph::eigendecompose(l, 8);
  CHECK(s.eigenvalues[0] <= 1e-8);
  CHECK(s.eigenvalues[1] > 1e-8);
  for (int i = 0; i < 8; ++i) {
    const double r = (l.matrix * s.eigenvectors.col(i) - s.eigenvalues[i] * s.eigenvectors.col(i)).norm();
    CHECK(r <= 1e-6 * std::max(1.0, s.eigenvalues[i]));
  }
}

TEST_CASE("largest eigenvalue and scaled laplacian") {
  SUBCASE("single edge") {
    const auto l = graph::laplacian(graph::graph_from_edges(2, {{0, 1}}));
    CHECK(graph::largest_eigenvalue(l) == doctest::Approx(2.0));
    Eigen::Matrix2d want;
    want << 0, -1, -1, 0;
    CHECK(Eigen::MatrixXd(graph::scaled_laplacian(l, 2.0).matrix) == want);
  }
  SUBCASE("K3 with lambda_max 3") {
    const auto scaled = graph::scaled_laplacian(graph::laplacian(triangle()), 3.0);
    const Eigen::VectorXd ev = oracle_eigenvalues(scaled);
    CHECK(ev[0] == doctest::Approx(-1.0));
    CHECK(ev[1] == doctest::Approx(1.0));
    CHECK(ev[2] == doctest::Approx(1.0));
  }
  SUBCASE("random graphs land in [-1, 1]") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      const auto l = graph::laplacian(testing::random_connected_graph(30 + 40 * static_cast<int>(seed), 90, seed));
      const double lmax = graph::largest_eigenvalue(l);
      CHECK(lmax == doctest::Approx(oracle_eigenvalues(l).maxCoeff()).epsilon(1e-10));
      const Eigen::VectorXd ev = oracle_eigenvalues(graph::scaled_laplacian(l, lmax));
      CHECK(ev.minCoeff() >= -1.0 - 1e-9);
      CHECK(ev.maxCoeff() <= 1.0 + 1e-9);
    }
  }
  SUBCASE("nonpositive lambda_max") {
    const auto l = graph::laplacian(triangle());
    CHECK_THROWS_AS(graph::scaled_laplacian(l, 0.0), ArgumentError);
    CHECK_THROWS_AS(graph::scaled_laplacian(l, -1.0), ArgumentError);
  }
}

TEST_CASE("tridiagonal QL against the oracle on random symmetric matrices") {
  std::mt19937_64 rng(99);
  for (int n : {1, 2, 7, 33}) {
    Eigen::MatrixXd a = testing::random_matrix(n, n, rng);
    a = (a + a.transpose()).eval();
    const auto mine = linalg::dense_symmetric_eigen(a);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    CHECK((mine.values - es.eigenvalues()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((a * mine.vectors - mine.vectors * mine.values.asDiagonal()).cwiseAbs().maxCoeff() <= 1e-10);
  }
}
