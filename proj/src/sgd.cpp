#include "duedl/sgd.hpp"

#include <cmath>

#include "duedl/errors.hpp"

namespace duedl {

void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
              double lr, double momentum, double weight_decay) {
  if (grad.size() != param.size() || velocity.size() != param.size()) {
    throw ShapeError("sgd_step: parameter, gradient and velocity sizes differ");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + (grad[i] + weight_decay * param[i]);
    param[i] -= lr * velocity[i];
  }
}

double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_grad_norm: max_norm must be > 0");
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& p : params) {
      for (double& g : p.mutable_grad()) g *= scale;
    }
  }
  return norm;
}

Sgd::Sgd(std::vector<Tensor> params, double lr, double momentum, double weight_decay)
    : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
  if (!(lr > 0.0)) throw ConfigError("sgd: learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("sgd: weight decay must be >= 0");
  for (const auto& p : params_) {
    if (!p.requires_grad()) throw ConfigError("sgd: parameter does not require grad");
    velocity_.emplace_back(p.numel(), 0.0);
  }
}

namespace {
std::vector<Tensor> values(const std::vector<std::pair<std::string, Tensor>>& named) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named) out.push_back(t);
  return out;
}
}  // namespace

Sgd::Sgd(const std::vector<std::pair<std::string, Tensor>>& named, double lr, double momentum,
         double weight_decay)
    : Sgd(values(named), lr, momentum, weight_decay) {}

void Sgd::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    sgd_step(params_[i].mutable_data(), params_[i].grad(), velocity_[i], lr_, momentum_, weight_decay_);
  }
}

double Sgd::clip_grad_norm(double max_norm) { return duedl::clip_grad_norm(params_, max_norm); }

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace duedl
