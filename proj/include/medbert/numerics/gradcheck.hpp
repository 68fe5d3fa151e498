#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "medbert/numerics/optim.hpp"

namespace medbert::num {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t n_checked = 0;
  std::string worst;  // "<param>[r,c]" of the largest error
};

// Central differences on n_samples coordinates, assigned round-robin over
// the parameter tensors and uniformly within each. Relative error is
// |fd - g| / max(|fd|, |g|, 1e-8). `loss` evaluates the objective at the
// current values; `gradient` fills every param's grad. `loss` must be
// deterministic: two evaluations at the same point that differ raise
// ValidationError before anything is checked.
GradCheckResult finite_diff_check(const std::function<double()>& loss, const std::function<void()>& gradient,
                                  std::span<Parameter* const> params, std::size_t n_samples, std::uint64_t seed,
                                  double h = 1e-5);

}  // namespace medbert::num
