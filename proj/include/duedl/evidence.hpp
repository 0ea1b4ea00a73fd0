#pragma once

#include <cstddef>
#include <utility>

#include "duedl/tensor.hpp"

namespace duedl {

// Per-pixel Dirichlet opinion built from non-negative class evidence e with
// class axis 0, e.g. [K, H, W]. alpha and S are computed once at
// construction; every derived quantity stays on the gradient tape:
//   alpha = e + 1, S = sum_j alpha_j, b = e / S, u = K / S, p = alpha / S.
class EvidenceMap {
 public:
  // Throws DomainError if any evidence entry is negative.
  explicit EvidenceMap(Tensor evidence);

  const Tensor& evidence() const { return evidence_; }
  std::size_t num_classes() const { return evidence_.dim(0); }

  Tensor alpha() const;
  Tensor strength() const;
  Tensor belief() const;
  Tensor uncertainty() const;
  Tensor prob() const;

 private:
  Tensor evidence_;
  Tensor alpha_;
  Tensor strength_;
};

// e = softplus(raw). Throws NumericError on non-finite activations.
EvidenceMap evidence_from_logits(const Tensor& raw);

std::pair<Tensor, Tensor> belief_and_uncertainty(const EvidenceMap& em);
Tensor expected_prob(const EvidenceMap& em);

}  // namespace duedl
