#pragma once

#include <vector>

#include <Eigen/Dense>

#include "sgt/autodiff.hpp"
#include "sgt/graph.hpp"
#include "sgt/mesh.hpp"

namespace sgt::losses {

/// Weak-perspective camera: x2d = scale * (x, y) + translation.
struct CameraParams {
  double scale = 1.0;
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();
};

/// Per-view 2D targets, each V x 2.
using Points2d = std::vector<Eigen::MatrixXd>;

/// Mean absolute deviation over all coordinates.
double l1_mesh(const Points& pred, const Points& gt);
Eigen::MatrixXd project(const Points& pts, const CameraParams& cam);
/// Σ |projected - gt| over views, vertices and both axes, divided by N V.
/// Throws ArgumentError for a nonpositive scale or mismatched shapes.
double reproject_2d(const Points& pred, const Points2d& gt2d, const std::vector<CameraParams>& cams);

struct ReprojectGradient {
  Points pred;
  std::vector<double> scale;
  std::vector<Eigen::Vector2d> translation;
};
ReprojectGradient reproject_2d_gradient(const Points& pred, const Points2d& gt2d,
                                        const std::vector<CameraParams>& cams);

/// (1/|E|) Σ |l² - mean(l²)|. Throws ArgumentError for an empty set.
double edge(const mesh::EdgeSet& edges);
double edge(const Points& pts, const std::vector<graph::Edge>& edges);
/// 0.5 (mean over a of min d² to b + mean over b of min d² to a).
double chamfer(const Points& a, const Points& b);
/// Mean squared per-vertex Euclidean distance.
double mse(const Points& pred, const Points& gt);
/// Mean per-vertex Euclidean distance in millimeters (inputs in meters).
double mpve(const Points& pred, const Points& gt);

// Tape versions. Targets are constants; `pred` is V x 3.
ad::Var l1_mesh(ad::Var pred, const Points& gt);
/// `cams` is N x 3 with columns (log scale, tx, ty).
ad::Var reproject_2d(ad::Var pred, ad::Var cams, const Points2d& gt2d);
ad::Var edge(ad::Var pred, const std::vector<graph::Edge>& edges);
ad::Var chamfer(ad::Var pred, const Points& target);
ad::Var mse(ad::Var pred, const Points& gt);

}  // namespace sgt::losses
