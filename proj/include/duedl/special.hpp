#pragma once

namespace duedl {

// Scalar special functions on x > 0; each throws DomainError for x <= 0.
// Absolute accuracy is better than 1e-10 on (0, 100].
double log_gamma(double x);
double digamma(double x);
double trigamma(double x);

}  // namespace duedl
