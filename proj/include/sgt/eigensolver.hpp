#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace sgt::linalg {

struct SymmetricEigen {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // column i pairs with values[i]
};

/// Householder reduction to tridiagonal form followed by implicit QL
/// iterations. Only the lower triangle of `a` is read.
SymmetricEigen dense_symmetric_eigen(const Eigen::MatrixXd& a);

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (size n-1), ascending.
Eigen::VectorXd tridiagonal_eigenvalues(Eigen::VectorXd diag, const Eigen::VectorXd& off);

/// The k smallest eigenpairs of a sparse symmetric positive semi-definite
/// matrix by shift-invert block subspace iteration with Rayleigh-Ritz
/// extraction.
SymmetricEigen smallest_eigenpairs(const Eigen::SparseMatrix<double>& a, int k);

/// Largest eigenvalue of a sparse symmetric matrix by Lanczos iteration with
/// full reorthogonalization.
double largest_eigenvalue(const Eigen::SparseMatrix<double>& a);

}  // namespace sgt::linalg
