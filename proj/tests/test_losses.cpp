#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "sgt/errors.hpp"
#include "sgt/gradcheck.hpp"
#include "sgt/losses.hpp"
#include "sgt/shapes.hpp"
#include "support.hpp"

using namespace sgt;

namespace {

Points random_points(int n, std::mt19937_64& rng) {
  return testing::random_matrix(n, 3, rng, 0.1);
}

// Scalar-loop oracles written without Eigen reductions.
double loop_l1(const Points& a, const Points& b) {
  double s = 0;
  for (int i = 0; i < a.rows(); ++i)
    for (int k = 0; k < 3; ++k) s += std::fabs(a(i, k) - b(i, k));
  return s / (3.0 * a.rows());
}

double loop_mse(const Points& a, const Points& b) {
  double s = 0;
  for (int i = 0; i < a.rows(); ++i) {
    double d = 0;
    for (int k = 0; k < 3; ++k) d += (a(i, k) - b(i, k)) * (a(i, k) - b(i, k));
    s += d;
  }
  return s / a.rows();
}

double loop_mpve(const Points& a, const Points& b) {
  double s = 0;
  for (int i = 0; i < a.rows(); ++i) {
    double d = 0;
    for (int k = 0; k < 3; ++k) d += (a(i, k) - b(i, k)) * (a(i, k) - b(i, k));
    s += std::sqrt(d);
  }
  return 1000.0 * s / a.rows();
}

double loop_chamfer(const Points& a, const Points& b) {
  auto one_way = [](const Points& p, const Points& q) {
    double s = 0;
    for (int i = 0; i < p.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < q.rows(); ++j) {
        double d = 0;
        for (int k = 0; k < 3; ++k) d += (p(i, k) - q(j, k)) * (p(i, k) - q(j, k));
        best = std::min(best, d);
      }
      s += best;
    }
    return s / p.rows();
  };
  return 0.5 * (one_way(a, b) + one_way(b, a));
}

// Edge loss evaluated term by term from raw lengths.
double direct_edge(const std::vector<double>& lengths) {
  double mu = 0;
  for (double l : lengths) mu += l * l;
  mu /= lengths.size();
  double s = 0;
  for (double l : lengths) s += std::fabs(l * l - mu);
  return s / lengths.size();
}

}  // namespace

TEST_CASE("l1, mse and mpve against loop oracles") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Points a = random_points(40 + trial, rng), b = random_points(40 + trial, rng);
    CHECK(std::abs(losses::l1_mesh(a, b) - loop_l1(a, b)) < 1e-12);
    CHECK(std::abs(losses::mse(a, b) - loop_mse(a, b)) < 1e-12);
    CHECK(std::abs(losses::mpve(a, b) - loop_mpve(a, b)) < 1e-10);
  }
  const Points a = random_points(10, rng);
  CHECK(losses::l1_mesh(a, a) == 0);
  CHECK(std::abs(losses::l1_mesh((a.array() + 1).matrix(), a) - 1) < 1e-12);
  Points shifted = a;
  shifted.col(1).array() += 0.3;
  CHECK(std::abs(losses::mse(shifted, a) - 0.09) < 1e-12);
  shifted = a;
  shifted.col(0).array() += 0.001;
  CHECK(std::abs(losses::mpve(shifted, a) - 1.0) < 1e-9);
  CHECK_THROWS_AS(losses::mse(a, random_points(9, rng)), ArgumentError);
}

TEST_CASE("chamfer against the brute-force oracle") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Points a = random_points(20 + trial, rng), b = random_points(35, rng);
    CHECK(std::abs(losses::chamfer(a, b) - loop_chamfer(a, b)) < 1e-10);
  }
  const Points a = random_points(12, rng);
  CHECK(losses::chamfer(a, a) == 0);
  Points p(1, 3), q(1, 3);
  p << 0, 0, 0;
  q << 0.3, 0.4, 0;
  CHECK(std::abs(losses::chamfer(p, q) - 0.25) < 1e-15);
}

TEST_CASE("edge loss fixtures") {
  // Equilateral triangle.
  Points tri(3, 3);
  tri << 0, 0, 0, 1, 0, 0, 0.5, std::sqrt(3.0) / 2, 0;
  const auto eq = mesh::edge_set(tri, {{0, 1, 2}});
  CHECK(std::abs(losses::edge(eq)) < 1e-15);

  // Two edges of length 1 and sqrt(3).
  Points two(3, 3);
  two << 0, 0, 0, 1, 0, 0, 0, std::sqrt(3.0), 0;
  const std::vector<graph::Edge> e{{0, 1}, {0, 2}};
  CHECK(std::abs(losses::edge(two, e) - 1.0) < 1e-12);
  CHECK(std::abs(direct_edge({1.0, std::sqrt(3.0)}) - 1.0) < 1e-12);

  const auto hand = shapes::icosphere(2, 0.05);
  const auto set = mesh::edge_set(hand);
  CHECK(std::abs(losses::edge(set) - direct_edge(set.lengths)) < 1e-15);
  CHECK(losses::edge(set) >= 0);
  Eigen::Matrix3d r = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  const Points moved = (hand.positions * r.transpose()).rowwise() + Eigen::RowVector3d(0.3, -1, 2);
  CHECK(std::abs(losses::edge(moved, set.edges) - losses::edge(set)) < 1e-9);
  CHECK_THROWS_AS(losses::edge(mesh::EdgeSet{}), ArgumentError);
}

TEST_CASE("reprojection loss") {
  std::mt19937_64 rng(3);
  const Points p = random_points(30, rng);
  losses::Points2d gt{p.leftCols<2>()};
  std::vector<losses::CameraParams> cams(1);
  CHECK(losses::reproject_2d(p, gt, cams) == 0);
  cams[0].translation = Eigen::Vector2d(0.2, -0.1);
  CHECK(std::abs(losses::reproject_2d(p, gt, cams) - 0.3) < 1e-12);
  cams[0].scale = 0;
  CHECK_THROWS_AS(losses::reproject_2d(p, gt, cams), ArgumentError);

  // Scale derivative against finite differences.
  cams = {{1.3, Eigen::Vector2d(0.01, 0.02)}, {0.8, Eigen::Vector2d(-0.03, 0.0)}};
  gt = {testing::random_matrix(30, 2, rng, 0.1), testing::random_matrix(30, 2, rng, 0.1)};
  const auto g = losses::reproject_2d_gradient(p, gt, cams);
  for (int n = 0; n < 2; ++n) {
    auto plus = cams, minus = cams;
    plus[n].scale += 1e-6;
    minus[n].scale -= 1e-6;
    const double num = (losses::reproject_2d(p, gt, plus) - losses::reproject_2d(p, gt, minus)) / 2e-6;
    CHECK(std::abs(num - g.scale[n]) <= 1e-5 * std::max(1.0, std::abs(num)));
  }
}

TEST_CASE("tape losses match values and finite differences") {
  std::mt19937_64 rng(4);
  const Points gt = random_points(25, rng);
  const Points pred = random_points(25, rng);
  // Few irregular edges so no squared length sits within a step of the mean.
  const std::vector<graph::Edge> edges{{0, 1}, {1, 2}, {2, 3}, {0, 3}, {1, 4}, {4, 5}};
  const Points sp = random_points(6, rng);
  losses::Points2d gt2d{testing::random_matrix(25, 2, rng, 0.1), testing::random_matrix(25, 2, rng, 0.1)};
  const Eigen::MatrixXd cams = testing::random_matrix(2, 3, rng, 0.2);

  ad::Tape t;
  CHECK(std::abs(losses::l1_mesh(t.constant(pred), gt).scalar() - losses::l1_mesh(pred, gt)) < 1e-15);
  CHECK(std::abs(losses::mse(t.constant(pred), gt).scalar() - losses::mse(pred, gt)) < 1e-15);
  CHECK(std::abs(losses::chamfer(t.constant(pred), gt).scalar() - losses::chamfer(pred, gt)) < 1e-15);

  gradcheck::Options o;
  o.seed = 4;
  auto run = [&](const gradcheck::Builder& b, std::vector<Eigen::MatrixXd> in) { return gradcheck::check(b, in, o); };
  CHECK(run([&](ad::Tape&, const std::vector<ad::Var>& v) { return losses::l1_mesh(v[0], gt); }, {pred}) < 1e-4);
  CHECK(run([&](ad::Tape&, const std::vector<ad::Var>& v) { return losses::mse(v[0], gt); }, {pred}) < 1e-6);
  CHECK(run([&](ad::Tape&, const std::vector<ad::Var>& v) { return losses::chamfer(v[0], gt); }, {pred}) < 1e-6);
  CHECK(run([&](ad::Tape&, const std::vector<ad::Var>& v) { return losses::edge(v[0], edges); }, {sp}) < 1e-4);
  CHECK(run([&](ad::Tape&, const std::vector<ad::Var>& v) { return losses::reproject_2d(v[0], v[1], gt2d); },
            {pred, cams}) < 1e-4);
}
