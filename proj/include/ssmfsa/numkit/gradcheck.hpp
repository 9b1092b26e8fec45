#pragma once

#include "ssmfsa/numkit/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace ssmfsa::num {

struct FiniteDiffOptions {
  double h = 1e-5;
  std::size_t coords_per_tensor = 12;  // 0 checks every coordinate
  std::uint64_t seed = 0;
  /// Denominator floor so coordinates with (near-)zero gradient compare by
  /// absolute error instead of blowing up.
  double abs_floor = 1e-6;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coords_checked = 0;
};

using LossFn = std::function<double(const ParamStore&)>;

/// Compares `analytic` against central differences of `loss` on a fixed
/// random subset of coordinates per tensor.
/// rel = |a - n| / max(|a|, |n|, abs_floor). Throws NonFiniteError if a
/// perturbed loss is not finite.
FiniteDiffReport finite_diff_check(const LossFn& loss, const ParamStore& params,
                                   const GradStore& analytic, const FiniteDiffOptions& options = {});

}  // namespace ssmfsa::num
