#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dosa/autodiff.hpp"

using namespace dosa::ad;

TEST_CASE("arithmetic gradients") {
  // f = x0*x1 + x0/x1 - 3
  ObjectiveFn f = [](Tape&, const std::vector<Var>& x) {
    return x[0] * x[1] + x[0] / x[1] - Var(3.0);
  };
  EvalResult r = grad(f, {2.0, 4.0});
  CHECK(r.value == doctest::Approx(8.0 + 0.5 - 3.0));
  CHECK(r.grad[0] == doctest::Approx(4.0 + 0.25));
  CHECK(r.grad[1] == doctest::Approx(2.0 - 2.0 / 16.0));
}

TEST_CASE("exp/log/pow gradients") {
  ObjectiveFn f = [](Tape&, const std::vector<Var>& x) {
    return exp(x[0]) + log(x[1]) + pow(x[2], 3.0);
  };
  EvalResult r = grad(f, {0.5, 2.0, 1.5});
  CHECK(r.grad[0] == doctest::Approx(std::exp(0.5)));
  CHECK(r.grad[1] == doctest::Approx(0.5));
  CHECK(r.grad[2] == doctest::Approx(3.0 * 1.5 * 1.5));
}

TEST_CASE("constants fold without touching the tape") {
  Tape t;
  Var a(2.0), b(3.0);
  Var c = a * b + exp(a) / b;
  CHECK(c.is_const());
  CHECK(t.size() == 0);
  CHECK(c.value() == doctest::Approx(6.0 + std::exp(2.0) / 3.0));
}

TEST_CASE("vmax routes the gradient through the winner and records it") {
  ObjectiveFn f = [](Tape&, const std::vector<Var>& x) {
    return vmax(x[0] * x[0], x[1]);
  };
  EvalResult a = grad(f, {3.0, 1.0});  // x0^2 wins
  CHECK(a.value == 9.0);
  CHECK(a.grad[0] == doctest::Approx(6.0));
  CHECK(a.grad[1] == 0.0);
  EvalResult b = grad(f, {1.0, 5.0});  // x1 wins
  CHECK(b.grad[0] == 0.0);
  CHECK(b.grad[1] == 1.0);
  CHECK(a.signature != b.signature);
}

TEST_CASE("softmax weights sum to one and have balanced gradients") {
  ObjectiveFn f = [](Tape&, const std::vector<Var>& x) {
    auto w = softmax(x);
    Var s(0.0);
    for (auto& v : w) s = s + v;
    return s;
  };
  EvalResult r = grad(f, {1.0, 2.0, 3.0});
  CHECK(r.value == doctest::Approx(1.0));
  for (double g : r.grad) CHECK(g == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fd_check agrees on a smooth objective") {
  ObjectiveFn f = [](Tape&, const std::vector<Var>& x) {
    return exp(x[0] * x[1]) + x[1] * x[1] / x[0];
  };
  FdCheckResult r = fd_check(f, {1.3, 0.7}, 1e-6);
  for (char e : r.excluded) CHECK(!e);
  CHECK(r.max_included_err < 1e-6);
}

TEST_CASE("fd_check excludes coordinates that straddle a branch") {
  ObjectiveFn f = [](Tape&, const std::vector<Var>& x) {
    return vmax(x[0], Var(0.5)) + x[1] * x[1];
  };
  FdCheckResult r = fd_check(f, {0.5, 2.0}, 1e-6);
  CHECK(r.excluded[0]);      // sits exactly on the max switch
  CHECK(!r.excluded[1]);
  CHECK(r.max_included_err < 1e-6);
}

TEST_CASE("noted predicate bits extend the branch signature") {
  ObjectiveFn f = [](Tape& t, const std::vector<Var>& x) {
    t.note(x[0].value() > 1.0);
    return x[0] * x[0];
  };
  EvalResult a = grad(f, {0.9});
  EvalResult b = grad(f, {1.1});
  CHECK(a.signature != b.signature);
}
