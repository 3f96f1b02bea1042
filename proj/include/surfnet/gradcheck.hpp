#pragma once

#include <functional>
#include <string>
#include <vector>

#include "surfnet/autodiff.hpp"

namespace surfnet {

struct GradCheckResult {
  /// max over entries of |analytic - numeric| / (|analytic| + 1e-8)
  double max_rel_error = 0.0;
  /// ||analytic - numeric|| / (||analytic|| + 1e-8) over all entries
  double norm_rel_error = 0.0;
  std::size_t entries = 0;
  /// Entries where analytic and numeric values both lie below noise_floor;
  /// they are excluded from max_rel_error.
  std::size_t zero_entries = 0;
  double noise_floor = 0.0;
  std::string worst;  // "input 2 entry 7" / "param 0 entry 3"
};

/// Builds a scalar loss from tape inputs (one per matrix in inputs, in
/// order). Parameters passed separately are read by the builder through
/// tape.parameter().
using LossBuilder = std::function<Var(Tape& tape, const std::vector<Var>& inputs)>;

/// Compares reverse-mode gradients with central differences of step h for
/// every entry of every input and parameter.
GradCheckResult check_gradients(const LossBuilder& loss, std::vector<DenseMatrix> inputs,
                                const std::vector<Param*>& params = {}, double h = 1e-5);

}  // namespace surfnet
