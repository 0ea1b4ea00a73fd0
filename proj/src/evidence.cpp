#include "duedl/evidence.hpp"

#include <cmath>

#include "duedl/errors.hpp"

namespace duedl {

EvidenceMap::EvidenceMap(Tensor evidence) : evidence_(std::move(evidence)) {
  if (evidence_.ndim() < 1 || evidence_.dim(0) == 0) {
    throw ShapeError("evidence map: needs a non-empty class axis");
  }
  for (double v : evidence_.data()) {
    if (!(v >= 0.0)) throw DomainError("evidence map: evidence must be non-negative");
  }
  alpha_ = add(evidence_, 1.0);
  strength_ = sum(alpha_, {0});
}

Tensor EvidenceMap::alpha() const { return alpha_; }

Tensor EvidenceMap::strength() const { return strength_; }

Tensor EvidenceMap::belief() const { return div(evidence_, strength()); }

Tensor EvidenceMap::uncertainty() const {
  return div(Tensor::scalar(static_cast<double>(num_classes())), strength());
}

Tensor EvidenceMap::prob() const { return div(alpha_, strength_); }

EvidenceMap evidence_from_logits(const Tensor& raw) {
  for (double v : raw.data()) {
    if (!std::isfinite(v)) throw NumericError("evidence_from_logits: non-finite activation");
  }
  return EvidenceMap(softplus(raw));
}

std::pair<Tensor, Tensor> belief_and_uncertainty(const EvidenceMap& em) {
  const Tensor s = em.strength();
  return {div(em.evidence(), s), div(Tensor::scalar(static_cast<double>(em.num_classes())), s)};
}

Tensor expected_prob(const EvidenceMap& em) { return em.prob(); }

}  // namespace duedl
