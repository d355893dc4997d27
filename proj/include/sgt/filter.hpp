#pragma once

#include <vector>

#include <Eigen/Dense>

#include "sgt/autodiff.hpp"
#include "sgt/graph.hpp"
#include "sgt/random.hpp"

namespace sgt::filter {

/// θ_k for k = 0..order-1, each F_in x F_out.
using Theta = std::vector<Eigen::MatrixXd>;

/// Uniform in ±1/sqrt(order * F_in).
Theta init_theta(int order, int f_in, int f_out, Rng& rng);

struct FilterSpec {
  enum class Kind { chebyshev, gaussian, inverse_sqrt };

  Kind kind = Kind::gaussian;
  double sigma = 0.5;
  double tolerance = 1e-8;
  /// Chebyshev only: coefficients and the λ_max used to map λ into [-1, 1].
  Theta theta;
  double lambda_max = 2.0;

  static FilterSpec gaussian(double sigma = 0.5);
  static FilterSpec inverse_sqrt(double tolerance = 1e-8);
  static FilterSpec chebyshev(Theta theta, double lambda_max);

  /// Throws ArgumentError when σ, tolerance, order or λ_max are out of range.
  void validate() const;
  /// Scalar response for gaussian / inverse_sqrt: exp(-λ²/2σ²) and
  /// max(λ, tolerance)^-1/2.
  double response(double lambda) const;
};

/// Chebyshev polynomial T_k(x) by the three-term recurrence.
double chebyshev_t(int k, double x);

/// U g(Λ) Uᵀ X. For the chebyshev kind the channel maps are applied as
/// Σ_k U T_k(2Λ/λ_max - 1) Uᵀ X θ_k. Needs a full spectrum.
Eigen::MatrixXd dense_spectral_filter(const graph::Spectrum& spectrum, const FilterSpec& filter,
                                      const Eigen::MatrixXd& signal);

/// Σ_k T_k(L̃) X θ_k using the recurrence on sparse products.
Eigen::MatrixXd chebyshev_filter(const graph::Laplacian& scaled_l, const Theta& theta,
                                 const Eigen::MatrixXd& signal);

struct FilterGradient {
  Theta theta;
  Eigen::MatrixXd signal;
};

/// Gradients of <G, chebyshev_filter(L̃, θ, X)>: θ_k gets T_k(L̃)X transposed
/// times G, and X gets Σ_k T_k(L̃)ᵀ G θ_kᵀ evaluated by Clenshaw's recurrence.
FilterGradient filter_gradient(const graph::Laplacian& scaled_l, const Theta& theta,
                               const Eigen::MatrixXd& signal, const Eigen::MatrixXd& upstream);

/// Tape node for chebyshev_filter; one var per θ slice.
ad::Var chebyshev_filter(const graph::Laplacian& scaled_l, const std::vector<ad::Var>& theta, ad::Var signal);

}  // namespace sgt::filter
