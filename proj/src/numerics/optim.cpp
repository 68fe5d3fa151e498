#include "medbert/numerics/optim.hpp"

#include <cmath>

#include "medbert/error.hpp"
#include "medbert/numerics/kernels.hpp"

namespace medbert::num {

void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg) {
  const auto& k = kernels::active();
  for (Parameter* p : params) {
    if (!p->grad.same_shape(p->value) || !p->m.same_shape(p->value) || !p->v.same_shape(p->value)) {
      throw ValidationError("adam_step: shape mismatch in parameter " + p->name);
    }
    ++p->step;
    const double t = static_cast<double>(p->step);
    const kernels::AdamCoeffs c{cfg.lr,
                                cfg.beta1,
                                cfg.beta2,
                                cfg.eps,
                                p->decay ? cfg.lr * cfg.weight_decay : 0.0,
                                1.0 - std::pow(cfg.beta1, t),
                                1.0 - std::pow(cfg.beta2, t)};
    k.adam_update(p->value.data(), p->grad.data(), p->m.data(), p->v.data(), p->value.size(), c);
  }
}

}  // namespace medbert::num
