#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "sgt/errors.hpp"
#include "sgt/refine.hpp"

namespace sgt::refine {

double collision_loss(const mesh::TriMesh& source, const CollisionMask& mask, const mesh::TriMesh& target,
                      Points* gradient, bool self) {
  if (static_cast<int>(mask.interior.size()) != source.num_vertices()) {
    throw ArgumentError("mask size differs from the source vertex count");
  }
  if (gradient) gradient->setZero(source.num_vertices(), 3);
  if (mask.count() == 0) return 0.0;
  const VertexGrid grid(target);
  double loss = 0;
  for (int i = 0; i < source.num_vertices(); ++i) {
    if (!mask.interior[i]) continue;
    const int j = grid.nearest(source.positions.row(i), self ? i : -1);
    if (j < 0 || source.normals.row(i).dot(target.normals.row(j)) >= 0) continue;
    const Eigen::RowVector3d diff = source.positions.row(i) - target.positions.row(j);
    const double d = diff.norm();
    loss += d;
    if (gradient && d > 0) gradient->row(i) += diff / d;
  }
  return loss;
}

double arap_energy(const mesh::TriMesh& rest, const Points& deformed, Points* gradient, int* skipped_cells) {
  if (deformed.rows() != rest.num_vertices()) throw ArgumentError("deformed positions do not match the rest mesh");
  const auto neighbors = mesh::to_graph(rest).neighbors();
  if (gradient) gradient->setZero(deformed.rows(), 3);
  if (skipped_cells) *skipped_cells = 0;
  double energy = 0;
  for (int i = 0; i < rest.num_vertices(); ++i) {
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    double rest_extent = 0;
    for (int j : neighbors[i]) {
      const Eigen::Vector3d e = (rest.positions.row(i) - rest.positions.row(j)).transpose();
      const Eigen::Vector3d ed = (deformed.row(i) - deformed.row(j)).transpose();
      cov += e * ed.transpose();
      rest_extent += e.squaredNorm();
    }
    if (neighbors[i].empty() || rest_extent == 0) {
      if (skipped_cells) ++*skipped_cells;
      continue;
    }
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d u = svd.matrixU();
    Eigen::Matrix3d r = svd.matrixV() * u.transpose();
    if (r.determinant() < 0) {
      u.col(2) *= -1;
      r = svd.matrixV() * u.transpose();
    }
    for (int j : neighbors[i]) {
      const Eigen::Vector3d e = (rest.positions.row(i) - rest.positions.row(j)).transpose();
      const Eigen::Vector3d ed = (deformed.row(i) - deformed.row(j)).transpose();
      const Eigen::Vector3d res = ed - r * e;
      energy += res.squaredNorm();
      if (gradient) {
        // Rotations are optimal, so they contribute nothing to the derivative.
        gradient->row(i) += 2 * res.transpose();
        gradient->row(j) -= 2 * res.transpose();
      }
    }
  }
  return energy;
}

void RefineConfig::validate() const {
  if (!(arap_weight >= 0)) throw ArgumentError("arap_weight must be >= 0");
  if (max_iters < 1) throw ArgumentError("max_iters must be >= 1");
  if (!(step_size > 0)) throw ArgumentError("step_size must be > 0");
  if (!(convergence_tol >= 0)) throw ArgumentError("convergence_tol must be >= 0");
  if (!(voxel_cm > 0)) throw ArgumentError("voxel size must be > 0");
}

namespace {

struct Objective {
  const mesh::TriMesh& source;
  const mesh::TriMesh& target;
  const RefineConfig& config;

  double operator()(const Points& x, Points* grad) const {
    const mesh::TriMesh cur = mesh::make_mesh(x, source.faces);
    Points g;
    double f = collision_loss(cur, collision_mask(cur, target, config.ray_direction_seed), target, &g);
    if (config.self_collision) {
      Points gs;
      f += collision_loss(cur, self_collision_mask(cur, config.ray_direction_seed), cur, &gs, true);
      g += gs;
    }
    if (config.arap_weight > 0) {
      Points ga;
      f += config.arap_weight * arap_energy(source, x, &ga);
      g += config.arap_weight * ga;
    }
    if (grad) *grad = std::move(g);
    return f;
  }
};

double max_penetration(const mesh::TriMesh& m, const mesh::TriMesh& target, std::uint64_t seed) {
  const CollisionMask mask = collision_mask(m, target, seed);
  double worst = 0;
  for (int i = 0; i < m.num_vertices(); ++i)
    if (mask.interior[i]) worst = std::max(worst, distance_to_surface(m.positions.row(i), target));
  return worst;
}

}  // namespace

RefineResult refine_mesh(const mesh::TriMesh& source, const mesh::TriMesh& target, const RefineConfig& config) {
  config.validate();
  if (!mesh::is_watertight(target)) throw ArgumentError("target mesh is not watertight");
  const Objective objective{source, target, config};

  RefineResult out;
  Points x = source.positions, g;
  double f = objective(x, &g);
  out.initial_loss = f;
  double alpha = config.step_size;
  int rises = 0;
  for (int it = 0; it < config.max_iters; ++it) {
    const double g2 = g.squaredNorm();
    if (g2 == 0) {
      out.converged = true;
      break;
    }
    // Backtracking on the Armijo condition; the mask is part of every trial.
    Points trial, trial_g;
    double trial_f = 0;
    bool accepted = false;
    for (int halvings = 0; halvings < 30; ++halvings, alpha *= 0.5) {
      trial = x - alpha * g;
      trial_f = objective(trial, &trial_g);
      if (trial_f <= f - 1e-4 * alpha * g2) {
        accepted = true;
        break;
      }
    }
    out.iterations = it + 1;
    if (!accepted) {
      out.converged = true;
      break;
    }
    const double change = f - trial_f;
    rises = trial_f > f ? rises + 1 : 0;
    x = std::move(trial);
    g = std::move(trial_g);
    f = trial_f;
    alpha = std::min(2 * alpha, config.step_size);
    if (rises >= 10) {
      out.diverged = true;
      break;
    }
    if (change < config.convergence_tol) {
      out.converged = true;
      break;
    }
  }
  out.final_loss = f;
  out.mesh = mesh::make_mesh(x, source.faces);
  // The input itself is always an admissible iterate; never report a worse one.
  if (max_penetration(out.mesh, target, config.ray_direction_seed) >
      max_penetration(source, target, config.ray_direction_seed)) {
    out.mesh = source;
    out.final_loss = out.initial_loss;
  }
  out.before = plausibility_metrics(source, target, config.voxel_cm, config.ray_direction_seed);
  out.after = plausibility_metrics(out.mesh, target, config.voxel_cm, config.ray_direction_seed);
  return out;
}

}  // namespace sgt::refine
