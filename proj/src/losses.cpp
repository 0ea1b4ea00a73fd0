#include "duedl/losses.hpp"

#include <algorithm>
#include <string>

#include "duedl/errors.hpp"
#include "duedl/special.hpp"

namespace duedl {

double LossConfig::lambda_t() const {
  if (!(beta > 0.0)) throw ConfigError("loss config: beta must be > 0");
  if (!(step >= 0.0)) throw ConfigError("loss config: annealing step must be >= 0");
  return std::min(1.0, step / beta);
}

namespace {

void require_scribble(const Tensor& t, const ScribbleMask& scribble, const char* who) {
  if (t.ndim() != 3 || t.dim(1) != scribble.labels().height || t.dim(2) != scribble.labels().width) {
    throw ShapeError(std::string(who) + ": tensor " + shape_str(t.shape()) +
                     " does not match the scribble map");
  }
  if (t.dim(0) != scribble.num_classes()) {
    throw ShapeError(std::string(who) + ": class count differs from scribble");
  }
  if (scribble.count() == 0) throw DataError(std::string(who) + ": empty scribble (no annotated pixels)");
}

// One-hot [K, n] of the annotated pixels' labels.
Tensor annotated_one_hot(const ScribbleMask& scribble) {
  const std::size_t k = scribble.num_classes();
  const auto& idx = scribble.annotated();
  std::vector<double> y(k * idx.size(), 0.0);
  for (std::size_t i = 0; i < idx.size(); ++i) y[scribble.labels().labels[idx[i]] * idx.size() + i] = 1.0;
  return Tensor(Shape{k, idx.size()}, std::move(y));
}

Tensor reduce_pixels(const Tensor& total, std::size_t count, Reduction reduction) {
  return reduction == Reduction::mean ? mul(total, 1.0 / static_cast<double>(count)) : total;
}

// One-hot [K, H, W] of a dense label map.
Tensor one_hot(const LabelMap& labels, std::size_t k) {
  const std::size_t plane = labels.size();
  std::vector<double> t(k * plane, 0.0);
  for (std::size_t i = 0; i < plane; ++i) {
    if (labels.labels[i] < k) t[labels.labels[i] * plane + i] = 1.0;
  }
  return Tensor(Shape{k, labels.height, labels.width}, std::move(t));
}

}  // namespace

Tensor partial_mse(const Tensor& prob, const Tensor& strength, const ScribbleMask& scribble,
                   Reduction reduction) {
  require_scribble(prob, scribble, "partial_mse");
  const auto& idx = scribble.annotated();
  const Tensor p = gather_columns(prob, 2, idx);
  const Tensor s = gather_columns(strength, 2, idx);
  const Tensor y = annotated_one_hot(scribble);
  const Tensor err = square(sub(y, p));
  const Tensor var = div(mul(p, sub(Tensor::scalar(1.0), p)), add(s, 1.0));
  return reduce_pixels(sum(add(err, var)), idx.size(), reduction);
}

Tensor partial_kl(const Tensor& alpha, const ScribbleMask& scribble, Reduction reduction) {
  require_scribble(alpha, scribble, "partial_kl");
  const auto& idx = scribble.annotated();
  const Tensor a = gather_columns(alpha, 2, idx);
  for (double v : a.data()) {
    if (!(v >= 1.0)) throw DomainError("partial_kl: alpha must be >= 1");
  }
  const std::size_t k = scribble.num_classes();
  const Tensor y = annotated_one_hot(scribble);
  const Tensor a_hat = add(mul(a, sub(Tensor::scalar(1.0), y)), y);
  const Tensor a_sum = sum(a_hat, {0});
  const Tensor log_norm = sub(sub(lgamma(a_sum), Tensor::scalar(log_gamma(static_cast<double>(k)))),
                              sum(lgamma(a_hat), {0}));
  const Tensor digamma_gap = sub(digamma(a_hat), digamma(a_sum));
  const Tensor cross = sum(mul(add(a_hat, -1.0), digamma_gap), {0});
  return reduce_pixels(sum(add(log_norm, cross)), idx.size(), reduction);
}

Tensor partial_edl(const DirichletView& view, const ScribbleMask& scribble, const LossConfig& cfg) {
  const double lambda = cfg.lambda_t();
  Tensor loss = partial_mse(view.prob, view.strength, scribble, cfg.reduction);
  if (lambda > 0.0) loss = add(loss, mul(partial_kl(view.alpha, scribble, cfg.reduction), lambda));
  return loss;
}

Tensor dice_loss(const Tensor& pred, const LabelMap& target, const std::vector<double>* pixel_mask) {
  if (pred.ndim() != 3 || pred.dim(1) != target.height || pred.dim(2) != target.width) {
    throw ShapeError("dice_loss: prediction " + shape_str(pred.shape()) + " does not match target");
  }
  const std::size_t k = pred.dim(0);
  Tensor t = one_hot(target, k);
  Tensor p = pred;
  if (pixel_mask != nullptr) {
    if (pixel_mask->size() != target.size()) throw ShapeError("dice_loss: mask size mismatch");
    const Tensor m(Shape{target.height, target.width}, *pixel_mask);
    p = mul(p, m);
    t = mul(t, m);
  }
  const Tensor inter = sum(mul(p, t), {1, 2});
  const Tensor denom = add(add(sum(p, {1, 2}), sum(t, {1, 2})), kDiceSmooth);
  const Tensor dice = div(add(mul(inter, 2.0), kDiceSmooth), denom);
  return sub(Tensor::scalar(1.0), mean(dice));
}

Tensor consistency_loss(const Tensor& p1, const Tensor& p2, const LabelMap& pseudo,
                        const std::vector<double>* pixel_mask) {
  return mul(add(dice_loss(p1, pseudo, pixel_mask), dice_loss(p2, pseudo, pixel_mask)), 0.5);
}

Tensor partial_cross_entropy(const Tensor& prob, const ScribbleMask& scribble, Reduction reduction) {
  require_scribble(prob, scribble, "partial_cross_entropy");
  const auto& idx = scribble.annotated();
  const std::size_t plane = scribble.labels().size();
  std::vector<std::size_t> picks;
  picks.reserve(idx.size());
  for (std::size_t i : idx) picks.push_back(scribble.labels().labels[i] * plane + i);
  const Tensor p_y = gather_columns(prob, prob.ndim(), picks);
  return reduce_pixels(neg(sum(log(p_y))), idx.size(), reduction);
}

JointLoss joint_loss(const DirichletView& branch1, const DirichletView& branch2,
                     const DirichletView& fused, const ScribbleMask& scribble,
                     const LabelMap& pseudo, const LossConfig& cfg, SupervisedLoss kind) {
  if (cfg.lambda_u < 0.0) throw ConfigError("loss config: lambda_u must be >= 0");
  auto supervised = [&](const DirichletView& v) {
    return kind == SupervisedLoss::edl ? partial_edl(v, scribble, cfg)
                                       : partial_cross_entropy(v.prob, scribble, cfg.reduction);
  };
  JointLoss out;
  out.supervised =
      mul(add(add(supervised(branch1), supervised(branch2)), supervised(fused)), 1.0 / 3.0);
  std::vector<double> unlabeled;
  if (cfg.ecl_scope == EclScope::unlabeled) {
    unlabeled.resize(scribble.labels().size());
    for (std::size_t i = 0; i < unlabeled.size(); ++i) unlabeled[i] = scribble.is_annotated(i) ? 0.0 : 1.0;
  }
  out.consistency = consistency_loss(branch1.prob, branch2.prob, pseudo,
                                     cfg.ecl_scope == EclScope::unlabeled ? &unlabeled : nullptr);
  out.total = cfg.lambda_u > 0.0 ? add(out.supervised, mul(out.consistency, cfg.lambda_u))
                                 : out.supervised;
  return out;
}

}  // namespace duedl
