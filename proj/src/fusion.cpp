#include "duedl/fusion.hpp"

#include <string>

#include "duedl/errors.hpp"

namespace duedl {

namespace {

constexpr double kConflictEps = 1e-12;

}  // namespace

FusedOpinion fuse(const Tensor& b1, const Tensor& u1, const Tensor& b2, const Tensor& u2) {
  if (b1.shape() != b2.shape() || u1.shape() != u2.shape() || b1.ndim() != u1.ndim() + 1) {
    throw ShapeError("fuse: opinions have mismatched shapes " + shape_str(b1.shape()) + "/" +
                     shape_str(u1.shape()) + " vs " + shape_str(b2.shape()) + "/" +
                     shape_str(u2.shape()));
  }
  const Tensor conflict = sub(mul(sum(b1, {0}), sum(b2, {0})), sum(mul(b1, b2), {0}));
  for (std::size_t i = 0; i < conflict.numel(); ++i) {
    if (conflict[i] >= 1.0 - kConflictEps) {
      throw NumericError("fuse: degenerate conflict C = " + std::to_string(conflict[i]) +
                         " at pixel " + std::to_string(i));
    }
  }
  const Tensor norm = sub(Tensor::scalar(1.0), conflict);
  // b1 u2 + b2 u1 is grouped so swapping the sources is bitwise symmetric.
  const Tensor cross = add(mul(b1, u2), mul(b2, u1));
  FusedOpinion out;
  out.belief = div(add(mul(b1, b2), cross), norm);
  out.uncertainty = div(mul(u1, u2), norm);
  out.conflict = conflict;
  return out;
}

FusedDirichlet fused_dirichlet(const FusedOpinion& f, std::size_t num_classes) {
  for (std::size_t i = 0; i < f.uncertainty.numel(); ++i) {
    if (!(f.uncertainty[i] > 0.0)) {
      throw DomainError("fused_dirichlet: degenerate certainty (u = 0) at pixel " + std::to_string(i));
    }
  }
  const Tensor k = Tensor::scalar(static_cast<double>(num_classes));
  FusedDirichlet d;
  d.strength = div(k, f.uncertainty);
  d.evidence = div(mul(f.belief, k), f.uncertainty);
  d.alpha = add(d.evidence, 1.0);
  d.prob = div(d.alpha, d.strength);
  return d;
}

LabelMap hard_pseudo_labels(const Tensor& prob) {
  if (prob.ndim() != 3) throw ShapeError("hard_pseudo_labels: expected [K,H,W]");
  const Tensor idx = argmax(prob, 0);
  LabelMap out(prob.dim(1), prob.dim(2));
  for (std::size_t i = 0; i < out.size(); ++i) out.labels[i] = static_cast<std::uint8_t>(idx[i]);
  return out;
}

}  // namespace duedl
