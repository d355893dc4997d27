#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sgt {

/// Dense row-major array with an explicit shape.
struct FeatureTensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  FeatureTensor() = default;
  explicit FeatureTensor(std::vector<std::int64_t> dims, double fill = 0.0);

  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  static std::int64_t element_count(const std::vector<std::int64_t>& dims);

  /// Throws NumericalError naming `what` if any entry is NaN or infinite and
  /// StructuralError if the data length disagrees with the shape.
  void require_valid(const std::string& what) const;

  /// Views the tensor as rows = shape[0], cols = product of the rest.
  Eigen::MatrixXd as_matrix() const;
  static FeatureTensor from_matrix(const Eigen::MatrixXd& m);
  static FeatureTensor from_matrix(const Eigen::MatrixXd& m, std::vector<std::int64_t> dims);
};

}  // namespace sgt
