#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "duedl/tensor.hpp"

namespace duedl {

// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v.
// Throws ShapeError when the three spans differ in length.
void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
              double lr, double momentum, double weight_decay);

// Rescales the accumulated gradients so their joint L2 norm is at most
// max_norm. Returns the norm before rescaling. Throws ConfigError unless
// max_norm > 0.
double clip_grad_norm(std::vector<Tensor>& params, double max_norm);

// Momentum SGD over a fixed parameter list. Velocities start at zero.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double lr, double momentum, double weight_decay);
  explicit Sgd(const std::vector<std::pair<std::string, Tensor>>& named, double lr, double momentum,
               double weight_decay);

  // Applies one update from each parameter's accumulated gradient.
  void step();
  void zero_grad();
  // clip_grad_norm over this optimizer's parameters.
  double clip_grad_norm(double max_norm);

  double lr() const { return lr_; }
  const std::vector<std::vector<double>>& velocity() const { return velocity_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_;
  double momentum_;
  double weight_decay_;
};

}  // namespace duedl
