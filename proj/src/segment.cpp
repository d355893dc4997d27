#include "sgt/segment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "sgt/errors.hpp"
#include "sgt/random.hpp"

namespace sgt::segment {
namespace {

int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& x, double* dist) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < centroids.rows(); ++k) {
    const double d = (centroids.row(k) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  if (dist != nullptr) *dist = best_d;
  return best;
}

std::vector<int> lexicographic_order(const Eigen::MatrixXd& points) {
  std::vector<int> order(points.rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    for (int c = 0; c < points.cols(); ++c) {
      if (points(a, c) != points(b, c)) return points(a, c) < points(b, c);
    }
    return false;
  });
  return order;
}

Eigen::MatrixXd plus_plus_seeds(const Eigen::MatrixXd& points, int K, Rng& rng) {
  const int n = static_cast<int>(points.rows());
  const std::vector<int> order = lexicographic_order(points);
  Eigen::MatrixXd centroids(K, points.cols());
  centroids.row(0) = points.row(order[uniform_index(rng, n)]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (int k = 1; k < K; ++k) {
    double total = 0.0;
    for (int i : order) {
      d2[i] = std::min(d2[i], (points.row(i) - centroids.row(k - 1)).squaredNorm());
      total += d2[i];
    }
    int pick = order[uniform_index(rng, n)];
    if (total > 0.0) {
      double target = uniform01(rng) * total;
      for (int i : order) {
        if (d2[i] <= 0.0) continue;
        pick = i;
        target -= d2[i];
        if (target < 0.0) break;
      }
    }
    centroids.row(k) = points.row(pick);
  }
  return centroids;
}

// Canonical sign independent of vertex order: positive third moment, or a
// positive largest-magnitude entry when the moment vanishes.
void canonical_signs(Eigen::MatrixXd& m) {
  for (int c = 0; c < m.cols(); ++c) {
    const double moment = m.col(c).array().cube().sum();
    const double scale = m.col(c).array().abs().cube().sum();
    double sign = moment;
    if (std::abs(moment) <= 1e-9 * scale) {
      Eigen::Index arg;
      m.col(c).cwiseAbs().maxCoeff(&arg);
      sign = m(arg, c);
    }
    if (sign < 0) m.col(c) *= -1.0;
  }
}

}  // namespace

std::vector<int> ClusterAssignment::cluster_sizes() const {
  std::vector<int> sizes(K, 0);
  for (int l : labels) ++sizes[l];
  return sizes;
}

ClusterAssignment kmeans(const Eigen::MatrixXd& points, int K, std::uint64_t seed,
                         const KMeansOptions& options) {
  const int n = static_cast<int>(points.rows());
  if (K < 1 || K > n) {
    throw ArgumentError("cluster count " + std::to_string(K) + " outside [1, " + std::to_string(n) + "]");
  }
  Rng rng(seed);
  ClusterAssignment out;
  out.K = K;
  out.centroids = plus_plus_seeds(points, K, rng);
  out.labels.assign(n, 0);
  out.converged = false;

  double best_inertia = std::numeric_limits<double>::infinity();
  ClusterAssignment best = out;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      double d = 0.0;
      out.labels[i] = nearest_centroid(out.centroids, points.row(i), &d);
      inertia += d;
    }
    // Repair empty clusters by splitting the largest one.
    for (int k = 0; k < K; ++k) {
      const auto sizes = out.cluster_sizes();
      if (sizes[k] > 0) continue;
      const int largest = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      int far = -1;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        if (out.labels[i] != largest) continue;
        const double d = (points.row(i) - out.centroids.row(largest)).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      out.labels[far] = k;
      out.centroids.row(k) = points.row(far);
    }

    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(K, points.cols());
    const auto sizes = out.cluster_sizes();
    for (int i = 0; i < n; ++i) next.row(out.labels[i]) += points.row(i);
    for (int k = 0; k < K; ++k) next.row(k) /= sizes[k];
    const double movement = (next - out.centroids).rowwise().norm().maxCoeff();
    out.centroids = next;

    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = out;
    }
    if (movement <= options.tolerance) {
      out.converged = true;
      // Final labels against the settled centroids.
      for (int i = 0; i < n; ++i) out.labels[i] = nearest_centroid(out.centroids, points.row(i), nullptr);
      if (std::ranges::all_of(out.cluster_sizes(), [](int s) { return s > 0; })) return out;
      return best;
    }
  }
  best.converged = false;
  return best;
}

ClusterAssignment segment(const graph::MeshGraph& g, int K, std::uint64_t seed,
                          const SegmentOptions& options) {
  const int n = g.num_vertices();
  if (K < 1 || K > n) {
    throw ArgumentError("cluster count " + std::to_string(K) + " outside [1, " + std::to_string(n) + "]");
  }
  const int width = options.n_eigvecs == 0 ? K : options.n_eigvecs;
  if (width < K) {
    throw ArgumentError("embedding width " + std::to_string(width) + " below cluster count " +
                        std::to_string(K));
  }
  if (K == 1) {
    ClusterAssignment trivial;
    trivial.K = 1;
    trivial.labels.assign(n, 0);
    trivial.centroids = Eigen::MatrixXd::Zero(1, 1);
    return trivial;
  }

  Eigen::MatrixXd points;
  if (graph::connected_components(g) == 1) {
    const auto spectrum = graph::eigendecompose(graph::laplacian(g), std::min(n, width + 1));
    points = spectrum.eigenvectors.rightCols(spectrum.size() - 1);
  } else {
    // u_1 is an arbitrary null-space vector here; centering removes only the
    // constant direction and keeps every component indicator.
    points = graph::eigendecompose(graph::laplacian(g), std::min(n, width)).eigenvectors;
    points.rowwise() -= points.colwise().mean();
  }
  canonical_signs(points);
  if (options.row_normalize) {
    for (int i = 0; i < n; ++i) {
      const double norm = points.row(i).norm();
      if (norm > 0) points.row(i) /= norm;
    }
  }
  return kmeans(points, K, seed, options.kmeans);
}

ClusterAssignment restrict_to(const ClusterAssignment& a, const std::vector<int>& vertices) {
  ClusterAssignment out;
  out.K = a.K;
  out.centroids = a.centroids;
  out.converged = a.converged;
  out.labels.reserve(vertices.size());
  for (int v : vertices) {
    if (v < 0 || v >= a.size()) throw ArgumentError("vertex " + std::to_string(v) + " has no label");
    out.labels.push_back(a.labels[v]);
  }
  return out;
}

Eigen::MatrixXd cluster_feature_broadcast(const std::vector<int>& labels,
                                          const Eigen::MatrixXd& region_features,
                                          const Eigen::MatrixXd& positions) {
  const int n = static_cast<int>(labels.size());
  if (positions.rows() != n || positions.cols() != 3) {
    throw ArgumentError("positions must be " + std::to_string(n) + " x 3");
  }
  const int C = static_cast<int>(region_features.cols());
  Eigen::MatrixXd tokens(n, C + 3);
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= region_features.rows()) {
      throw ArgumentError("label " + std::to_string(labels[i]) + " has no region feature row");
    }
    tokens.row(i).head(C) = region_features.row(labels[i]);
    tokens.row(i).tail(3) = positions.row(i);
  }
  return tokens;
}

std::string to_json(const ClusterAssignment& a) {
  nlohmann::ordered_json j;
  j["K"] = a.K;
  j["labels"] = a.labels;
  return j.dump() + "\n";
}

ClusterAssignment from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("cluster JSON: ") + e.what(), 0);
  }
  if (!j.contains("K") || !j.contains("labels")) throw ParseError("cluster JSON needs K and labels", 0);
  ClusterAssignment a;
  a.K = j.at("K").get<int>();
  a.labels = j.at("labels").get<std::vector<int>>();
  for (int l : a.labels) {
    if (l < 0 || l >= a.K) throw ParseError("label " + std::to_string(l) + " outside [0, K)", 0);
  }
  return a;
}

}  // namespace sgt::segment
