#include "ssmfsa/numkit/gradcheck.hpp"

#include "ssmfsa/error.hpp"
#include "ssmfsa/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ssmfsa::num {

FiniteDiffReport finite_diff_check(const LossFn& loss, const ParamStore& params, const GradStore& analytic,
                                   const FiniteDiffOptions& options) {
  if (!params.same_layout(analytic)) throw ShapeError("finite_diff_check: gradient layout mismatch");
  Rng rng(options.seed);
  ParamStore probe = params;
  FiniteDiffReport report;

  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    const Eigen::Index count = params.at(ti).size();
    if (count == 0) continue;
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(count));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (options.coords_per_tensor > 0 && coords.size() > options.coords_per_tensor) {
      rng.shuffle(std::span(coords));
      coords.resize(options.coords_per_tensor);
    }
    for (const Eigen::Index idx : coords) {
      double& slot = probe.at(ti).data()[idx];
      const double saved = slot;
      slot = saved + options.h;
      const double plus = loss(probe);
      slot = saved - options.h;
      const double minus = loss(probe);
      slot = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NonFiniteError("finite_diff_check: non-finite loss at " + params.tensors()[ti].name);
      }
      const double numeric = (plus - minus) / (2.0 * options.h);
      const double exact = analytic.at(ti).data()[idx];
      const double denom = std::max({std::abs(numeric), std::abs(exact), options.abs_floor});
      const double rel = std::abs(numeric - exact) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_error || report.worst_index < 0) {
        report.max_rel_error = std::max(rel, report.max_rel_error);
        if (rel >= report.max_rel_error) {
          report.worst_tensor = params.tensors()[ti].name;
          report.worst_index = idx;
          report.worst_analytic = exact;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace ssmfsa::num
