#include "sgt/eigensolver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include <Eigen/SparseCholesky>

#include "sgt/errors.hpp"

namespace sgt::linalg {
namespace {

constexpr int kMaxQlIterations = 60;

// Householder tridiagonalization. On return `v` holds the accumulated
// orthogonal transform, `d` the diagonal and `e` the subdiagonal in e[1..n-1].
void tridiagonalize(Eigen::MatrixXd& v, Eigen::VectorXd& d, Eigen::VectorXd& e) {
  const int n = static_cast<int>(v.rows());
  for (int j = 0; j < n; ++j) d[j] = v(n - 1, j);

  for (int i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (int k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (int j = 0; j < i; ++j) {
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
        v(j, i) = 0.0;
      }
    } else {
      for (int k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (int j = 0; j < i; ++j) e[j] = 0.0;

      for (int j = 0; j < i; ++j) {
        f = d[j];
        v(j, i) = f;
        g = e[j] + v(j, j) * f;
        for (int k = j + 1; k <= i - 1; ++k) {
          g += v(k, j) * d[k];
          e[k] += v(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (int j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (int j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (int j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (int k = j; k <= i - 1; ++k) v(k, j) -= (f * e[k] + g * d[k]);
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
      }
    }
    d[i] = h;
  }

  for (int i = 0; i < n - 1; ++i) {
    v(n - 1, i) = v(i, i);
    v(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (int k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
      for (int j = 0; j <= i; ++j) {
        double g = 0.0;
        for (int k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
        for (int k = 0; k <= i; ++k) v(k, j) -= g * d[k];
      }
    }
    for (int k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
  }
  for (int j = 0; j < n; ++j) {
    d[j] = v(n - 1, j);
    v(n - 1, j) = 0.0;
  }
  v(n - 1, n - 1) = 1.0;
  e[0] = 0.0;
}

// Implicit QL on the tridiagonal (d, e[1..n-1]); rotations are applied to
// the columns of `v` when it is non-null.
void tridiagonal_ql(Eigen::VectorXd& d, Eigen::VectorXd& e, Eigen::MatrixXd* v) {
  const int n = static_cast<int>(d.size());
  for (int i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;

  double f = 0.0;
  double tst1 = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  for (int l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    int m = l;
    while (m < n - 1 && std::abs(e[m]) > eps * tst1) ++m;

    if (m > l) {
      int iter = 0;
      do {
        if (++iter > kMaxQlIterations) {
          throw NumericalError("tridiagonal QL did not converge after " +
                               std::to_string(kMaxQlIterations) + " iterations at index " +
                               std::to_string(l));
        }
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (int i = l + 2; i < n; ++i) d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e[l + 1];
        double s = 0.0, s2 = 0.0;
        for (int i = m - 1; i >= l; --i) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          if (v != nullptr) {
            for (int k = 0; k < v->rows(); ++k) {
              h = (*v)(k, i + 1);
              (*v)(k, i + 1) = s * (*v)(k, i) + c * h;
              (*v)(k, i) = c * (*v)(k, i) - s * h;
            }
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }
}

SymmetricEigen sorted(const Eigen::VectorXd& values, const Eigen::MatrixXd& vectors) {
  std::vector<int> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return values[a] < values[b]; });
  SymmetricEigen out;
  out.values.resize(values.size());
  out.vectors.resize(vectors.rows(), vectors.cols());
  for (int i = 0; i < static_cast<int>(order.size()); ++i) {
    out.values[i] = values[order[i]];
    if (vectors.size() > 0) out.vectors.col(i) = vectors.col(order[i]);
  }
  return out;
}

Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& x) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  return qr.householderQ() * Eigen::MatrixXd::Identity(x.rows(), x.cols());
}

Eigen::MatrixXd seeded_block(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd x(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i)
      x(i, j) = static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5;
  return x;
}

}  // namespace

SymmetricEigen dense_symmetric_eigen(const Eigen::MatrixXd& a) {
  const int n = static_cast<int>(a.rows());
  if (n == 0) return {};
  Eigen::MatrixXd v = a.selfadjointView<Eigen::Lower>();
  Eigen::VectorXd d(n), e(n);
  tridiagonalize(v, d, e);
  tridiagonal_ql(d, e, &v);
  return sorted(d, v);
}

Eigen::VectorXd tridiagonal_eigenvalues(Eigen::VectorXd diag, const Eigen::VectorXd& off) {
  const int n = static_cast<int>(diag.size());
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  for (int i = 1; i < n; ++i) e[i] = off[i - 1];
  tridiagonal_ql(diag, e, nullptr);
  std::sort(diag.begin(), diag.end());
  return diag;
}

SymmetricEigen smallest_eigenpairs(const Eigen::SparseMatrix<double>& a, int k) {
  const int n = static_cast<int>(a.rows());
  const int block = std::min(n, std::max(2 * k, k + 8));
  constexpr int kMaxIterations = 1000;

  double diag_max = 0.0;
  for (int i = 0; i < n; ++i) diag_max = std::max(diag_max, std::abs(a.coeff(i, i)));
  const double shift = 1e-3 * std::max(diag_max, 1.0);

  Eigen::SparseMatrix<double> shifted = a;
  for (int i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(shifted);
  if (solver.info() != Eigen::Success) throw NumericalError("shifted factorization failed");

  const double tol = 1e-11 * std::max(diag_max, 1.0);
  Eigen::MatrixXd x = orthonormal_basis(seeded_block(n, block, 0x5eedULL));
  for (int iter = 1; iter <= kMaxIterations; ++iter) {
    x = orthonormal_basis(solver.solve(x));
    const Eigen::MatrixXd ax = a * x;
    const Eigen::MatrixXd projected = x.transpose() * ax;
    const SymmetricEigen ritz = dense_symmetric_eigen(projected);
    x = x * ritz.vectors;
    const Eigen::MatrixXd residual = a * x.leftCols(k) - x.leftCols(k) * ritz.values.head(k).asDiagonal();
    if (residual.colwise().norm().maxCoeff() <= tol) {
      return {ritz.values.head(k), x.leftCols(k)};
    }
  }
  throw NumericalError("subspace iteration did not converge after " +
                       std::to_string(kMaxIterations) + " iterations");
}

double largest_eigenvalue(const Eigen::SparseMatrix<double>& a) {
  const int n = static_cast<int>(a.rows());
  if (n <= 64) {
    return dense_symmetric_eigen(Eigen::MatrixXd(a)).values[n - 1];
  }
  const int max_steps = std::min(n, 300);
  Eigen::MatrixXd basis(n, max_steps);
  Eigen::VectorXd alpha(max_steps), beta(max_steps);
  Eigen::VectorXd q = seeded_block(n, 1, 0x1a2c05ULL).col(0);
  q.normalize();
  double previous = 0.0;
  int stable_steps = 0;
  for (int j = 0; j < max_steps; ++j) {
    basis.col(j) = q;
    Eigen::VectorXd w = a * q;
    alpha[j] = q.dot(w);
    // Two passes of classical Gram-Schmidt against the whole basis.
    for (int pass = 0; pass < 2; ++pass) {
      w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
    }
    beta[j] = w.norm();
    const Eigen::VectorXd ritz =
        tridiagonal_eigenvalues(alpha.head(j + 1), beta.head(j));
    const double current = ritz[j];
    stable_steps = std::abs(current - previous) <= 1e-14 * std::abs(current) ? stable_steps + 1 : 0;
    if (beta[j] <= 1e-14 * std::abs(current) || stable_steps >= 3) return current;
    previous = current;
    q = w / beta[j];
  }
  return previous;
}

}  // namespace sgt::linalg
