#pragma once

#include "duedl/rng.hpp"
#include "duedl/tensor.hpp"

namespace duedl {

// Inverted dropout. In training mode each element is zeroed with probability
// `rate` and survivors are scaled by 1/(1-rate); the mask is kept for the
// backward pass. In eval mode the input tensor itself is returned.
Tensor dropout(const Tensor& input, double rate, Rng& rng, bool training);

}  // namespace duedl
