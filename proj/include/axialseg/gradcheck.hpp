#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "axialseg/autograd.hpp"

namespace axialseg {

struct GradCheckOptions {
  double eps = 1e-4;
  /// Check at most this many evenly spaced entries per param; 0 checks all.
  std::size_t max_entries_per_param = 0;
};

struct ParamGradError {
  std::string name;
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  double eps = 0;
  double max_rel_error = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
  std::vector<ParamGradError> per_param;

  bool passed(double tol) const { return max_rel_error < tol; }
};

/// The loss changed between two evaluations at the same parameters.
class NonDeterministicError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using LossBuilder = std::function<Var<double>(Tape<double>&)>;

/// Compares the tape gradient of `loss` with central differences
/// (f(t+eps) - f(t-eps)) / 2eps for every checked scalar of every param, scoring
/// |a - n| / max(1, |a|, |n|). Param grads are zeroed first and hold the
/// analytic gradient afterwards. Throws NonDeterministicError when the
/// unperturbed loss drifts between probes.
GradCheckReport grad_check(const LossBuilder& loss, std::span<Param<double>* const> params,
                           const GradCheckOptions& opt = {});

}  // namespace axialseg
