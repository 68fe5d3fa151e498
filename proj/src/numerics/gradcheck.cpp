#include "medbert/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "medbert/error.hpp"

namespace medbert::num {

GradCheckResult finite_diff_check(const std::function<double()>& loss, const std::function<void()>& gradient,
                                  std::span<Parameter* const> params, std::size_t n_samples, std::uint64_t seed,
                                  double h) {
  if (params.empty()) throw ValidationError("finite_diff_check: no parameters");
  const double l0 = loss();
  const double l1 = loss();
  if (l0 != l1) throw ValidationError("finite_diff_check: loss function is not deterministic (dropout enabled?)");

  for (Parameter* p : params) p->zero_grad();
  gradient();

  std::mt19937_64 rng(seed);
  GradCheckResult result;
  for (std::size_t s = 0; s < n_samples; ++s) {
    Parameter& p = *params[s % params.size()];
    if (p.value.empty()) continue;
    const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, p.value.size() - 1)(rng);
    double& theta = p.value.data()[idx];
    const double saved = theta;
    theta = saved + h;
    const double plus = loss();
    theta = saved - h;
    const double minus = loss();
    theta = saved;

    const double fd = (plus - minus) / (2.0 * h);
    const double g = p.grad.data()[idx];
    const double err = std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), 1e-8});
    ++result.n_checked;
    if (err >= result.max_rel_error) {
      result.max_rel_error = err;
      result.worst = p.name + "[" + std::to_string(idx / p.value.cols()) + "," +
                     std::to_string(idx % p.value.cols()) + "]";
    }
  }
  return result;
}

}  // namespace medbert::num
