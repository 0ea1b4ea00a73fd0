#include <doctest.h>

#include <cmath>

#include "duedl/errors.hpp"
#include "duedl/evidence.hpp"
#include "support/oracles.hpp"

using namespace duedl;

namespace {

EvidenceMap pixel(std::vector<double> e) {
  const std::size_t k = e.size();
  return EvidenceMap(Tensor({k, 1, 1}, std::move(e)));
}

}  // namespace

TEST_CASE("very negative raw scores give a vacuous opinion") {
  const auto em = evidence_from_logits(Tensor::full({4, 2, 2}, -100.0));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(em.uncertainty()[i] == doctest::Approx(1.0).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(em.evidence()[i] < 1e-40);
    CHECK(em.prob()[i] == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("zero raw score gives ln 2 evidence") {
  const auto em = evidence_from_logits(Tensor::zeros({3, 1, 1}));
  for (std::size_t c = 0; c < 3; ++c) CHECK(em.evidence()[c] == doctest::Approx(std::log(2.0)));
}

TEST_CASE("single-class evidence example") {
  const auto em = pixel({3, 0, 0, 0});
  const double alpha[] = {4, 1, 1, 1};
  for (std::size_t c = 0; c < 4; ++c) CHECK(em.alpha()[c] == alpha[c]);
  CHECK(em.strength().item() == 7.0);
  CHECK(em.belief()[0] == doctest::Approx(3.0 / 7).epsilon(1e-15));
  for (std::size_t c = 1; c < 4; ++c) CHECK(em.belief()[c] == 0.0);
  CHECK(em.uncertainty().item() == doctest::Approx(4.0 / 7).epsilon(1e-15));
  CHECK(em.prob()[0] == doctest::Approx(4.0 / 7).epsilon(1e-15));
  for (std::size_t c = 1; c < 4; ++c) CHECK(em.prob()[c] == doctest::Approx(1.0 / 7).epsilon(1e-15));
}

TEST_CASE("uniform evidence example") {
  const auto [b, u] = belief_and_uncertainty(pixel({1, 1, 1, 1}));
  for (std::size_t c = 0; c < 4; ++c) CHECK(b[c] == 0.125);
  CHECK(u.item() == 0.5);
}

TEST_CASE("two-class expected probability example") {
  const Tensor p = expected_prob(pixel({8, 0}));
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("negative evidence is rejected") {
  CHECK_THROWS_AS(pixel({1, -0.5}), DomainError);
}

TEST_CASE("opinions partition the unit on random maps") {
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    const auto em = evidence_from_logits(oracle::random_tensor(rng, {4, 8, 8}, -10, 10));
    const Tensor b = em.belief();
    const Tensor u = em.uncertainty();
    const Tensor p = em.prob();
    for (std::size_t i = 0; i < 64; ++i) {
      double sb = u[i], sp = 0;
      for (std::size_t c = 0; c < 4; ++c) {
        sb += b[c * 64 + i];
        sp += p[c * 64 + i];
        CHECK(b[c * 64 + i] >= 0);
      }
      CHECK(std::abs(sb - 1) < 1e-9);
      CHECK(std::abs(sp - 1) < 1e-9);
      CHECK(u[i] > 0);
      CHECK(u[i] <= 1);
    }
  }
}

TEST_CASE("more evidence on a class raises its probability and lowers u") {
  const auto lo = pixel({1, 2, 0.5});
  const auto hi = pixel({3, 2, 0.5});
  CHECK(hi.prob()[0] > lo.prob()[0]);
  CHECK(hi.uncertainty().item() < lo.uncertainty().item());
}

TEST_CASE("probabilities sum to a constant so their raw-score gradient vanishes") {
  Rng rng(4);
  Tensor raw = oracle::random_tensor(rng, {4, 2, 3}, -2, 2, true);
  Tape tape;
  {
    Tape::Scope s(tape);
    tape.backward(sum(evidence_from_logits(raw).prob()));
  }
  for (double g : raw.grad()) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("opinion quantities match finite differences") {
  Rng rng(8);
  Tensor raw = oracle::random_tensor(rng, {4, 3, 3}, -2, 2, true);
  const Tensor w = oracle::random_tensor(rng, {4, 3, 3}, -1, 1);
  const Tensor wu = oracle::random_tensor(rng, {3, 3}, -1, 1);
  auto loss = [&] {
    const auto em = evidence_from_logits(raw);
    return add(add(sum(mul(em.prob(), w)), sum(mul(em.belief(), w))), sum(mul(em.uncertainty(), wu)));
  };
  CHECK(oracle::check_gradients(loss, {raw}).max_rel < 1e-5);
}
