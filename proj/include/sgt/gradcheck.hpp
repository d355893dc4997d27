#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sgt/autodiff.hpp"

namespace sgt::gradcheck {

struct Options {
  double h = 1e-4;
  /// Denominator floor for the relative error.
  double floor = 1e-6;
  /// Entries probed per input; all of them when the input is smaller.
  int max_entries = 48;
  std::uint64_t seed = 0;
};

using Builder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

struct Report {
  double max_relative_error = 0.0;
  int probed = 0;
  /// Probes whose +h or -h evaluation took a different branch of a
  /// non-smooth op (relu, max, |x|, nearest neighbor); not compared.
  int skipped = 0;
};

/// Compares tape gradients of <R, build(inputs)> for a fixed seeded R against
/// central differences. Per input the error is max|analytic - numeric| over
/// the probed entries divided by max(max|analytic|, max|numeric|, floor);
/// the largest over inputs is reported.
Report check_report(const Builder& build, const std::vector<ad::Matrix>& inputs, const Options& options);
double check(const Builder& build, const std::vector<ad::Matrix>& inputs, const Options& options);

struct Result {
  std::string module;
  std::string op;
  double max_relative_error = 0.0;
  int probed = 0;
  int skipped = 0;
  double tolerance = 1e-4;
  bool passed() const { return probed > 0 && max_relative_error < tolerance; }
};

/// fusion, transformer, decoder, spectral_filter, losses, camera.
std::vector<std::string> module_names();
/// Runs the finite-difference checks of one module (all when empty) on
/// small seeded instances. Throws ArgumentError for an unknown module.
std::vector<Result> run_suite(const std::string& module, std::uint64_t seed);

}  // namespace sgt::gradcheck
