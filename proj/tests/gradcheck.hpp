#pragma once

// Central finite-difference gradient checking used across the test suites.
// Independent of the autodiff path: it only calls the forward function.

#include <cmath>
#include <functional>
#include <string>

#include "memt/tensor.hpp"

namespace memt::testing {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;  // "param[i]" of the worst element
};

inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-4});
  return std::fabs(analytic - numeric) / denom;
}

// f() must recompute the scalar loss from current parameter values.
// params' grads must already hold the analytic gradient.
inline GradCheckResult finite_diff_check(const std::function<double()>& f,
                                         std::vector<Parameter>& params, double h = 1e-5) {
  GradCheckResult res;
  for (auto& p : params) {
    auto& data = *p.tensor.data;
    auto& grad = *p.tensor.grad;
    for (size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = f();
      data[i] = saved - h;
      const double down = f();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = rel_err(grad[i], numeric);
      if (err > res.max_rel_err) {
        res.max_rel_err = err;
        res.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

}  // namespace memt::testing
