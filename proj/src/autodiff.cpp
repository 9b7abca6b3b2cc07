#include "dosa/autodiff.hpp"

#include <limits>

namespace dosa::ad {

EvalResult grad(const ObjectiveFn& f, const std::vector<double>& x) {
  Tape tape;
  std::vector<Var> inputs;
  inputs.reserve(x.size());
  for (double v : x) inputs.push_back(make_input(tape, v));
  Var out = f(tape, inputs);
  EvalResult res;
  res.value = out.value();
  res.signature = tape.branch_signature();
  res.grad.assign(x.size(), 0.0);
  if (!out.is_const()) {
    std::vector<double> adj = tape.backward(out.idx);
    for (std::size_t i = 0; i < x.size(); ++i) res.grad[i] = adj[inputs[i].idx];
  }
  return res;
}

namespace {

std::pair<double, std::vector<std::uint8_t>> eval_with_signature(
    const ObjectiveFn& f, const std::vector<double>& x) {
  Tape tape;
  std::vector<Var> inputs;
  inputs.reserve(x.size());
  for (double v : x) inputs.push_back(make_input(tape, v));
  Var out = f(tape, inputs);
  return {out.value(), tape.branch_signature()};
}

}  // namespace

FdCheckResult fd_check(const ObjectiveFn& f, const std::vector<double>& x,
                       double h) {
  EvalResult at_x = grad(f, x);
  FdCheckResult res;
  res.rel_err.assign(x.size(), 0.0);
  res.excluded.assign(x.size(), 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    double step = h * std::max(std::abs(x[i]), 1.0);
    std::vector<double> xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    auto [fp, sig_p] = eval_with_signature(f, xp);
    auto [fm, sig_m] = eval_with_signature(f, xm);
    if (sig_p != at_x.signature || sig_m != at_x.signature) {
      res.excluded[i] = 1;
      continue;
    }
    double fd = (fp - fm) / (2.0 * step);
    // Central differences cannot resolve slopes below the cancellation
    // noise eps*|f|/step; fold that floor into the denominator so a
    // tiny true slope buried under a huge objective is not a failure.
    double noise = std::numeric_limits<double>::epsilon() *
                   std::abs(at_x.value) / step;
    double denom = std::max({std::abs(fd), std::abs(at_x.grad[i]), 1e-300});
    double diff = std::abs(fd - at_x.grad[i]);
    double err = diff <= noise ? 0.0 : diff / denom;
    res.rel_err[i] = err;
    if (err > res.max_included_err) res.max_included_err = err;
  }
  return res;
}

}  // namespace dosa::ad
