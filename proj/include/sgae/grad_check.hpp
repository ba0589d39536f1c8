#pragma once

// Central-difference gradient oracle.
//
// Relative error per coordinate is |analytic - numeric| / max(floor, |analytic| + |numeric|).
// The floor (default 1e-6) sits above the roundoff of a double-precision central
// difference, roughly eps * |f| / h ~ 1e-11 for O(1) losses at h = 1e-5. Without it,
// coordinates whose true gradient is ~1e-8 report errors of 1e-3 from roundoff alone.
// Gradients at or above the floor are still held to the full relative tolerance.
// With skip_near_kink set, coordinates whose current value satisfies |x| < 10h are
// not checked: a ReLU applied directly to such a coordinate has a kink inside the
// difference stencil, so the central difference is meaningless there.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "sgae/tensor.hpp"

namespace sgae {

struct FiniteDiffOptions {
  double step = 1e-5;
  bool skip_near_kink = false;
  double error_floor = 1e-6;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

inline double gradient_relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max(floor, std::abs(analytic) + std::abs(numeric));
}

/// Checks d f / d p for every coordinate of every tensor in `params`.
/// `f` must rebuild its scalar output from the current parameter values on each call.
inline FiniteDiffReport finite_diff_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                          FiniteDiffOptions options = {}) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor out = f();
    tape.backward(out);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) {
    analytic.emplace_back(p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                       : std::vector<double>(p.numel(), 0.0));
  }

  NoTapeScope no_tape;
  FiniteDiffReport report;
  const double h = options.step;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      if (options.skip_near_kink && std::abs(original) < 10.0 * h) {
        ++report.skipped;
        continue;
      }
      values[i] = original + h;
      const double plus = f().item();
      values[i] = original - h;
      const double minus = f().item();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * h);
      const double err = gradient_relative_error(analytic[t][i], numeric, options.error_floor);
      ++report.checked;
      if (err > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        if (err >= report.max_rel_error) {
          report.worst_tensor = t;
          report.worst_index = i;
          report.worst_analytic = analytic[t][i];
          report.worst_numeric = numeric;
        }
      }
    }
  }
  return report;
}

/// Single-input form: checks d f(x) / d x.
inline FiniteDiffReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                                          FiniteDiffOptions options = {}) {
  return finite_diff_check([&f, &x] { return f(x); }, std::vector<Tensor>{x}, options);
}

}  // namespace sgae
