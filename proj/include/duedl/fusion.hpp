#pragma once

#include <cstddef>

#include "duedl/label_map.hpp"
#include "duedl/tensor.hpp"

namespace duedl {

// Two-source reduced Dempster combination of subjective opinions.
//
// For each pixel, with beliefs b1, b2 over K classes and uncertainties u1, u2:
//   C  = sum_{n != m} b1_n b2_m = (sum b1)(sum b2) - sum_n b1_n b2_n
//   b+ = (b1 b2 + b1 u2 + b2 u1) / (1 - C)
//   u+ = u1 u2 / (1 - C)
// Every step is a tape op, so the fused opinion is differentiable.
struct FusedOpinion {
  Tensor belief;       // [K, H, W]
  Tensor uncertainty;  // [H, W]
  Tensor conflict;     // [H, W]
};

// Throws NumericError naming the first pixel whose conflict reaches 1 - 1e-12.
FusedOpinion fuse(const Tensor& b1, const Tensor& u1, const Tensor& b2, const Tensor& u2);

// Dirichlet parameters of a fused opinion:
//   e = K b / u,  S = K / u,  alpha = e + 1,  p = alpha / S.
struct FusedDirichlet {
  Tensor evidence;
  Tensor strength;
  Tensor alpha;
  Tensor prob;
};

// Throws DomainError when any u == 0.
FusedDirichlet fused_dirichlet(const FusedOpinion& f, std::size_t num_classes);

// Per-pixel argmax over the class axis of p [K, H, W]; ties go to the lowest
// class id. The result is plain data and carries no gradient.
LabelMap hard_pseudo_labels(const Tensor& prob);

}  // namespace duedl
