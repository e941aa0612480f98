// attnback/grad_check.hpp

// Copyright 2026  attnback authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "attnback/error.hpp"

namespace attnback {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_numeric = 0.0;
  double worst_analytic = 0.0;
};

/// Compares `analytic` with central differences of `f` at `point`.  The
/// per-coordinate error is |numeric - analytic| / max(1, |analytic|).
inline GradCheckResult GradCheckDetailed(
    const std::function<double(std::span<const double>)> &f,
    std::span<const double> point, std::span<const double> analytic,
    double eps) {
  ATTNBACK_CHECK(eps > 0.0, "grad_check: eps must be positive, got ", eps);
  ATTNBACK_CHECK(point.size() == analytic.size(), "grad_check: point has ",
                 point.size(), " coordinates but gradient has ", analytic.size());
  std::vector<double> x(point.begin(), point.end());
  GradCheckResult result;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double plus = f(x);
    x[i] = saved - eps;
    const double minus = f(x);
    x[i] = saved;
    ATTNBACK_CHECK(std::isfinite(plus) && std::isfinite(minus),
                   "grad_check: non-finite function value at coordinate ", i);
    const double numeric = (plus - minus) / (2.0 * eps);
    const double err =
        std::abs(numeric - analytic[i]) / std::max(1.0, std::abs(analytic[i]));
    if (i == 0 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
      result.worst_numeric = numeric;
      result.worst_analytic = analytic[i];
    }
  }
  return result;
}

inline double GradCheck(const std::function<double(std::span<const double>)> &f,
                        std::span<const double> point,
                        std::span<const double> analytic, double eps) {
  return GradCheckDetailed(f, point, analytic, eps).max_rel_error;
}

}  // namespace attnback
