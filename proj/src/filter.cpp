#include "sgt/filter.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "sgt/errors.hpp"

namespace sgt::filter {
namespace {

void check_shapes(const graph::Laplacian& l, const Theta& theta, const Eigen::MatrixXd& signal) {
  if (theta.empty()) throw ArgumentError("chebyshev order must be at least 1");
  if (signal.rows() != l.size()) {
    throw ArgumentError("signal has " + std::to_string(signal.rows()) + " rows for a " +
                        std::to_string(l.size()) + "-vertex graph");
  }
  for (const auto& t : theta) {
    if (t.rows() != signal.cols() || t.cols() != theta.front().cols()) {
      throw ArgumentError("theta slices must all be " + std::to_string(signal.cols()) + " x " +
                          std::to_string(theta.front().cols()));
    }
  }
}

}  // namespace

Theta init_theta(int order, int f_in, int f_out, Rng& rng) {
  if (order < 1 || f_in < 1 || f_out < 1) throw ArgumentError("bad theta dimensions");
  const double bound = 1.0 / std::sqrt(static_cast<double>(order) * f_in);
  Theta theta(order, Eigen::MatrixXd(f_in, f_out));
  for (auto& t : theta)
    for (Eigen::Index j = 0; j < t.cols(); ++j)
      for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, j) = uniform(rng, -bound, bound);
  return theta;
}

FilterSpec FilterSpec::gaussian(double sigma) {
  FilterSpec f;
  f.kind = Kind::gaussian;
  f.sigma = sigma;
  f.validate();
  return f;
}

FilterSpec FilterSpec::inverse_sqrt(double tolerance) {
  FilterSpec f;
  f.kind = Kind::inverse_sqrt;
  f.tolerance = tolerance;
  f.validate();
  return f;
}

FilterSpec FilterSpec::chebyshev(Theta theta, double lambda_max) {
  FilterSpec f;
  f.kind = Kind::chebyshev;
  f.theta = std::move(theta);
  f.lambda_max = lambda_max;
  f.validate();
  return f;
}

void FilterSpec::validate() const {
  switch (kind) {
    case Kind::gaussian:
      if (!(sigma > 0)) throw ArgumentError("gaussian sigma must be positive");
      break;
    case Kind::inverse_sqrt:
      if (!(tolerance > 0)) throw ArgumentError("inverse_sqrt tolerance must be positive");
      break;
    case Kind::chebyshev:
      if (theta.empty()) throw ArgumentError("chebyshev order must be at least 1");
      if (!(lambda_max > 0)) throw ArgumentError("lambda_max must be positive");
      break;
  }
}

double FilterSpec::response(double lambda) const {
  switch (kind) {
    case Kind::gaussian:
      return std::exp(-lambda * lambda / (2 * sigma * sigma));
    case Kind::inverse_sqrt:
      return 1.0 / std::sqrt(std::max(lambda, tolerance));
    case Kind::chebyshev:
      break;
  }
  throw ArgumentError("chebyshev filters have a matrix-valued response");
}

double chebyshev_t(int k, double x) {
  if (k == 0) return 1.0;
  double prev = 1.0, cur = x;
  for (int i = 1; i < k; ++i) {
    const double next = 2 * x * cur - prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

Eigen::MatrixXd dense_spectral_filter(const graph::Spectrum& spectrum, const FilterSpec& filter,
                                      const Eigen::MatrixXd& signal) {
  filter.validate();
  if (!spectrum.is_full()) throw ArgumentError("dense filtering needs the full spectrum");
  const Eigen::MatrixXd& u = spectrum.eigenvectors;
  if (signal.rows() != u.rows()) throw ArgumentError("signal rows do not match the spectrum");
  const Eigen::MatrixXd coeffs = u.transpose() * signal;

  if (filter.kind != FilterSpec::Kind::chebyshev) {
    Eigen::VectorXd g(spectrum.size());
    for (int i = 0; i < spectrum.size(); ++i) g(i) = filter.response(spectrum.eigenvalues(i));
    return u * (g.asDiagonal() * coeffs);
  }

  const Theta& theta = filter.theta;
  for (const auto& t : theta) {
    if (t.rows() != signal.cols() || t.cols() != theta.front().cols()) {
      throw ArgumentError("theta shape does not match the signal");
    }
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(signal.rows(), theta.front().cols());
  for (std::size_t k = 0; k < theta.size(); ++k) {
    Eigen::VectorXd g(spectrum.size());
    for (int i = 0; i < spectrum.size(); ++i) {
      g(i) = chebyshev_t(static_cast<int>(k), 2 * spectrum.eigenvalues(i) / filter.lambda_max - 1);
    }
    out += u * (g.asDiagonal() * coeffs) * theta[k];
  }
  return out;
}

Eigen::MatrixXd chebyshev_filter(const graph::Laplacian& scaled_l, const Theta& theta,
                                 const Eigen::MatrixXd& signal) {
  check_shapes(scaled_l, theta, signal);
  const SparseMatrix& l = scaled_l.matrix;
  Eigen::MatrixXd prev = signal;
  Eigen::MatrixXd out = prev * theta[0];
  if (theta.size() == 1) return out;
  Eigen::MatrixXd cur = l * signal;
  out += cur * theta[1];
  for (std::size_t k = 2; k < theta.size(); ++k) {
    Eigen::MatrixXd next = 2.0 * (l * cur) - prev;
    out += next * theta[k];
    prev = std::move(cur);
    cur = std::move(next);
  }
  return out;
}

FilterGradient filter_gradient(const graph::Laplacian& scaled_l, const Theta& theta,
                               const Eigen::MatrixXd& signal, const Eigen::MatrixXd& upstream) {
  check_shapes(scaled_l, theta, signal);
  if (upstream.rows() != signal.rows() || upstream.cols() != theta.front().cols()) {
    throw ArgumentError("upstream gradient shape does not match the filter output");
  }
  const SparseMatrix& l = scaled_l.matrix;
  const int order = static_cast<int>(theta.size());

  FilterGradient grad;
  grad.theta.resize(order);
  Eigen::MatrixXd prev = signal;
  grad.theta[0] = prev.transpose() * upstream;
  if (order > 1) {
    Eigen::MatrixXd cur = l * signal;
    grad.theta[1] = cur.transpose() * upstream;
    for (int k = 2; k < order; ++k) {
      Eigen::MatrixXd next = 2.0 * (l * cur) - prev;
      grad.theta[k] = next.transpose() * upstream;
      prev = std::move(cur);
      cur = std::move(next);
    }
  }

  // Clenshaw: b_k = c_k + 2 Lᵀ b_{k+1} - b_{k+2}, result = c_0 + Lᵀ b_1 - b_2.
  const SparseMatrix lt = l.transpose();
  const Eigen::Index n = signal.rows(), f_in = signal.cols();
  Eigen::MatrixXd b1 = Eigen::MatrixXd::Zero(n, f_in), b2 = Eigen::MatrixXd::Zero(n, f_in);
  for (int k = order - 1; k >= 1; --k) {
    Eigen::MatrixXd b = upstream * theta[k].transpose() + 2.0 * (lt * b1) - b2;
    b2 = std::move(b1);
    b1 = std::move(b);
  }
  grad.signal = upstream * theta[0].transpose() + lt * b1 - b2;
  return grad;
}

ad::Var chebyshev_filter(const graph::Laplacian& scaled_l, const std::vector<ad::Var>& theta, ad::Var signal) {
  Theta values;
  bool needs = signal.tape->needs_grad(signal);
  for (ad::Var t : theta) {
    values.push_back(t.value());
    needs = needs || t.tape->needs_grad(t);
  }
  auto l = std::make_shared<const graph::Laplacian>(scaled_l);
  ad::Tape* tape = signal.tape;
  return tape->push(chebyshev_filter(*l, values, signal.value()), needs,
                    [tape, l, theta, values, signal](const ad::Matrix& g) {
                      const FilterGradient grad = filter_gradient(*l, values, signal.value(), g);
                      tape->accumulate(signal, grad.signal);
                      for (std::size_t k = 0; k < theta.size(); ++k) tape->accumulate(theta[k], grad.theta[k]);
                    });
}

}  // namespace sgt::filter
