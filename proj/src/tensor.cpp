#include "sgt/tensor.hpp"

#include <cmath>

#include "sgt/errors.hpp"

namespace sgt {

FeatureTensor::FeatureTensor(std::vector<std::int64_t> dims, double fill)
    : shape(std::move(dims)), data(static_cast<std::size_t>(element_count(shape)), fill) {}

std::int64_t FeatureTensor::element_count(const std::vector<std::int64_t>& dims) {
  std::int64_t n = 1;
  for (auto d : dims) {
    if (d < 0) throw ArgumentError("negative tensor dimension");
    n *= d;
  }
  return n;
}

void FeatureTensor::require_valid(const std::string& what) const {
  if (element_count(shape) != size()) {
    throw StructuralError(what + ": data length does not match shape");
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericalError(what + ": non-finite value");
  }
}

Eigen::MatrixXd FeatureTensor::as_matrix() const {
  if (shape.empty()) throw ArgumentError("rank-0 tensor has no matrix view");
  const Eigen::Index rows = shape[0];
  const Eigen::Index cols = rows == 0 ? 0 : size() / rows;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[r * cols + c];
  return m;
}

FeatureTensor FeatureTensor::from_matrix(const Eigen::MatrixXd& m) {
  return from_matrix(m, {m.rows(), m.cols()});
}

FeatureTensor FeatureTensor::from_matrix(const Eigen::MatrixXd& m, std::vector<std::int64_t> dims) {
  if (element_count(dims) != m.size()) throw ArgumentError("shape does not match matrix size");
  FeatureTensor t;
  t.shape = std::move(dims);
  t.data.resize(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data[r * m.cols() + c] = m(r, c);
  return t;
}

}  // namespace sgt
