#include <doctest.h>

#include <cmath>

#include "pico/errors.hpp"
#include "pico/fusion.hpp"
#include "pico/gradcheck.hpp"
#include "pico/ops.hpp"
#include "pico/verify.hpp"
#include "support.hpp"

using namespace pico;

namespace {

double dist(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.at(i) - b.at(i)) * (a.at(i) - b.at(i));
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("base gate") {
  const Tensor x = Tensor::vector({0.4, -1.0, 2.0});
  CHECK(base_gate(GateHead::zeros(3), x).item() == 0.5);
  GateHead head = GateHead::zeros(3);
  double prev = 0.5;
  for (double b = 1.0; b <= 20.0; b += 1.0) {
    head.linear.bias.values()[0] = b;
    const double g = base_gate(head, x).item();
    CHECK(g > prev);
    CHECK(g <= 1.0);
    prev = g;
  }
  CHECK(prev > 1.0 - 1e-8);
  Rng rng(1);
  const GateHead r = GateHead::init(3, rng);
  CHECK(base_gate(r, x).item() == base_gate(r, x).item());
  CHECK_THROWS_AS(base_gate(r, Tensor::vector({1, 2})), ContractError);
}

TEST_CASE("effective gate") {
  CHECK(effective_gate(0.2, 0.9, 0.3).alpha_eff == 0.9);
  CHECK(effective_gate(0.0, 0.0, 0.0).alpha_eff == 0.0);
  CHECK(effective_gate(0.5, 0.5, 0.5).alpha_eff == 0.5);
  const GateSignals s = effective_gate(0.1, 0.2, 0.7);
  CHECK(s.alpha0 == 0.1);
  CHECK(s.expert == 0.2);
  CHECK(s.ckg == 0.7);
  CHECK_THROWS_AS(effective_gate(1.2, 0.0, 0.0), ContractError);
  CHECK_THROWS_AS(effective_gate(0.0, -0.1, 0.0), ContractError);
  CHECK_THROWS_AS(effective_gate(0.0, 0.0, std::nan("")), ContractError);

  Rng rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = u(rng), e = u(rng), k = u(rng);
    const double base = effective_gate(a, e, k).alpha_eff;
    CHECK(base == std::max({a, e, k}));
    const double bump = u(rng) * (1.0 - std::max({a, e, k}));
    CHECK(effective_gate(std::min(1.0, a + bump), e, k).alpha_eff >= base);
    CHECK(effective_gate(a, std::min(1.0, e + bump), k).alpha_eff >= base);
    CHECK(effective_gate(a, e, std::min(1.0, k + bump)).alpha_eff >= base);
  }
}

TEST_CASE("differentiable gate routes the subgradient to the first maximiser") {
  const auto grads = [](double a, double e, double k) {
    Tensor ta = Tensor::scalar(a, true), te = Tensor::scalar(e, true);
    Tape tape;
    TapeScope scope(tape);
    const Tensor g = effective_gate(ta, te, k);
    tape.backward(g);
    return std::pair{ta.has_grad() ? ta.grad()[0] : 0.0, te.has_grad() ? te.grad()[0] : 0.0};
  };
  CHECK(grads(0.7, 0.2, 0.1) == std::pair{1.0, 0.0});
  CHECK(grads(0.2, 0.7, 0.1) == std::pair{0.0, 1.0});
  CHECK(grads(0.5, 0.5, 0.1) == std::pair{1.0, 0.0});
  CHECK(grads(0.2, 0.3, 0.9) == std::pair{0.0, 0.0});
}

TEST_CASE("fuse") {
  const Tensor es = Tensor::vector({1, 0}), eu = Tensor::vector({0, 1});
  const FusedState at1 = fuse(es, eu, effective_gate(1.0, 0.0, 0.0));
  const FusedState at0 = fuse(es, eu, effective_gate(0.0, 0.0, 0.0));
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(at1.fused.at(i) == es.at(i));
    CHECK(at0.fused.at(i) == eu.at(i));
  }
  const FusedState f = fuse(es, eu, effective_gate(0.9, 0.0, 0.0));
  CHECK(f.fused.at(0) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(f.fused.at(1) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(dist(f.fused, es) == doctest::Approx(0.14142).epsilon(1e-4));
  CHECK(std::abs(dist(f.fused, es) - 0.1 * std::sqrt(2.0)) <= 1e-12);
  CHECK_THROWS_AS(fuse(es, Tensor::vector({1, 2, 3}), f.signals), ContractError);

  // The tensor form agrees with the plain form and differentiates through e_u and α.
  Rng rng(3);
  const Tensor s = pico::testing::random_tensor({5}, rng), u = pico::testing::random_tensor({5}, rng);
  const FusedState plain = fuse(s, u, effective_gate(0.37, 0.0, 0.0));
  const Tensor t = fuse(s, u, Tensor::scalar(0.37));
  for (std::size_t i = 0; i < 5; ++i) CHECK(t.at(i) == doctest::Approx(plain.fused.at(i)).epsilon(1e-15));
  const auto f_alpha = [&](const Tensor& a) { return ops::sum(ops::mul(fuse(s, u, a), s)); };
  CHECK(finite_diff_check(f_alpha, Tensor::scalar(0.37)) <= 1e-8);
  const auto f_user = [&](const Tensor& x) { return ops::sum(ops::mul(fuse(s, x, Tensor::scalar(0.37)), s)); };
  CHECK(finite_diff_check(f_user, u) <= 1e-8);
}

TEST_CASE("fusion identities hold on 1000 random draws") {
  Rng rng(derive_seed(5, "fusion"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  double worst = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t d = dim(rng);
    const double scale = std::pow(10.0, unit(rng) * 2 - 1);
    const Tensor es = pico::testing::random_tensor({d}, rng, -scale, scale);
    const Tensor eu = pico::testing::random_tensor({d}, rng, -scale, scale);
    const GateSignals g = effective_gate(unit(rng), unit(rng), unit(rng));
    const Tensor f = fuse(es, eu, g).fused;
    const double gap = dist(eu, es);
    const double r1 = std::abs(dist(f, es) - (1.0 - g.alpha_eff) * gap);
    const double r3 = std::abs(dist(f, eu) - g.alpha_eff * gap);
    const double seg = std::abs(dist(f, es) + dist(f, eu) - gap);
    worst = std::max({worst, r1, r3, seg});
  }
  CHECK(worst <= 1e-9);
}
