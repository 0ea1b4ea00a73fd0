#include <doctest.h>

#include <cmath>

#include "duedl/errors.hpp"
#include "duedl/special.hpp"
#include "support/oracles.hpp"

using namespace duedl;

namespace {

struct GridPoint {
  double x, log_gamma, digamma;
};

// Regenerate with tests/oracles/reference_values.py --emit-grid.
const GridPoint kGrid[] = {
#include "oracles/special_grid.inc"
};

}  // namespace

TEST_CASE("special functions at known points") {
  CHECK(std::abs(digamma(1.0) + 0.57721566490153286061) < 1e-12);
  CHECK(std::abs(log_gamma(1.0)) < 1e-14);
  CHECK(std::abs(log_gamma(2.0)) < 1e-14);
  CHECK(log_gamma(4.0) == doctest::Approx(std::log(6.0)).epsilon(1e-14));
  CHECK(trigamma(1.0) == doctest::Approx(M_PI * M_PI / 6).epsilon(1e-12));
}

TEST_CASE("digamma recurrence") {
  for (double x : {0.01, 0.3, 1.0, 2.5, 5.9, 6.0, 17.0, 99.0}) {
    CAPTURE(x);
    CHECK(std::abs(digamma(x + 1) - digamma(x) - 1 / x) < 1e-10);
  }
}

TEST_CASE("log-gamma and digamma on the 100-point reference grid") {
  REQUIRE(std::size(kGrid) == 100);
  double worst_lg = 0, worst_dg = 0;
  for (const auto& g : kGrid) {
    worst_lg = std::max(worst_lg, std::abs(log_gamma(g.x) - g.log_gamma));
    worst_dg = std::max(worst_dg, std::abs(digamma(g.x) - g.digamma));
  }
  CHECK(worst_lg < 1e-10);
  CHECK(worst_dg < 1e-10);
}

TEST_CASE("special functions reject non-positive arguments") {
  CHECK_THROWS_AS(log_gamma(0.0), DomainError);
  CHECK_THROWS_AS(digamma(-1.0), DomainError);
  CHECK_THROWS_AS(trigamma(0.0), DomainError);
}

TEST_CASE("trigamma is the derivative of digamma") {
  for (double x : {0.2, 1.0, 3.3, 12.0, 60.0}) {
    const double h = 1e-5 * x;
    const double fd = (digamma(x + h) - digamma(x - h)) / (2 * h);
    CHECK(trigamma(x) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("test-side digamma oracle agrees with the library") {
  for (double x = 0.05; x < 90; x *= 1.37) CHECK(std::abs(oracle::digamma(x) - digamma(x)) < 1e-10);
}
