#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "medbert/numerics/matrix.hpp"

namespace medbert::num {

// Trainable tensor with its gradient and Adam moments.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m;
  Matrix v;
  std::int64_t step = 0;
  bool decay = true;  // false for layer-norm gains and biases

  Parameter() = default;
  Parameter(std::string name_, std::size_t rows, std::size_t cols, bool decay_ = true)
      : name(std::move(name_)), value(rows, cols), grad(rows, cols), m(rows, cols), v(rows, cols), decay(decay_) {}

  void zero_grad() { grad.fill(0.0); }
};

struct AdamConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// theta <- theta - lr*wd*theta (decayed tensors only), then the
// bias-corrected Adam step using the tensor's own step count.
void adam_step(std::span<Parameter* const> params, const AdamConfig& cfg);

}  // namespace medbert::num
