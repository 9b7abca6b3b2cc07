#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace dosa::ad {

// Wengert-list reverse-mode tape over scalars. Local partials are fixed
// at forward time (every supported primitive permits this), so the
// backward sweep is a single reverse pass over the node array.
//
// The tape also records every discrete choice made during evaluation
// (max/min branch winners plus predicate bits noted by model code); the
// concatenated bits form a branch signature used by fd_check to detect
// points sitting on a switching surface.
class Tape {
 public:
  struct Node {
    double val;
    std::int32_t p1, p2;  // parent indices, -1 if unused
    double w1, w2;        // d val / d parent
  };

  int input(double v) { return push(v, -1, -1, 0.0, 0.0); }
  int push(double val, int p1, int p2, double w1, double w2) {
    nodes_.push_back({val, p1, p2, w1, w2});
    return static_cast<int>(nodes_.size()) - 1;
  }
  double value(int idx) const { return nodes_[idx].val; }
  void note(bool bit) { branches_.push_back(bit ? 1 : 0); }
  const std::vector<std::uint8_t>& branch_signature() const {
    return branches_;
  }

  // Adjoints of every node w.r.t. the output node.
  std::vector<double> backward(int output) const {
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[output] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      const Node& n = nodes_[i];
      double a = adj[i];
      if (a == 0.0) continue;
      if (n.p1 >= 0) adj[n.p1] += a * n.w1;
      if (n.p2 >= 0) adj[n.p2] += a * n.w2;
    }
    return adj;
  }

  void clear() {
    nodes_.clear();
    branches_.clear();
  }
  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

 private:
  std::vector<Node> nodes_;
  std::vector<std::uint8_t> branches_;
};

// A value that is either a tape node or an inline constant (tape ==
// nullptr). Constants fold without allocating nodes, so generic model
// code can freely mix literals with tracked variables.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;
  double cval = 0.0;

  Var() = default;
  Var(double c) : cval(c) {}  // NOLINT: implicit by design
  Var(Tape* t, int i) : tape(t), idx(i) {}

  bool is_const() const { return tape == nullptr; }
  double value() const { return tape ? tape->value(idx) : cval; }
};

inline Var make_input(Tape& t, double v) { return Var(&t, t.input(v)); }

inline Var operator+(const Var& a, const Var& b) {
  if (a.is_const() && b.is_const()) return Var(a.cval + b.cval);
  if (a.is_const()) return Var(b.tape, b.tape->push(a.cval + b.value(), b.idx, -1, 1.0, 0.0));
  if (b.is_const()) return Var(a.tape, a.tape->push(a.value() + b.cval, a.idx, -1, 1.0, 0.0));
  assert(a.tape == b.tape);
  return Var(a.tape, a.tape->push(a.value() + b.value(), a.idx, b.idx, 1.0, 1.0));
}

inline Var operator-(const Var& a, const Var& b) {
  if (a.is_const() && b.is_const()) return Var(a.cval - b.cval);
  if (a.is_const()) return Var(b.tape, b.tape->push(a.cval - b.value(), b.idx, -1, -1.0, 0.0));
  if (b.is_const()) return Var(a.tape, a.tape->push(a.value() - b.cval, a.idx, -1, 1.0, 0.0));
  assert(a.tape == b.tape);
  return Var(a.tape, a.tape->push(a.value() - b.value(), a.idx, b.idx, 1.0, -1.0));
}

inline Var operator-(const Var& a) { return Var(0.0) - a; }

inline Var operator*(const Var& a, const Var& b) {
  if (a.is_const() && b.is_const()) return Var(a.cval * b.cval);
  if (a.is_const()) return Var(b.tape, b.tape->push(a.cval * b.value(), b.idx, -1, a.cval, 0.0));
  if (b.is_const()) return Var(a.tape, a.tape->push(a.value() * b.cval, a.idx, -1, b.cval, 0.0));
  assert(a.tape == b.tape);
  return Var(a.tape, a.tape->push(a.value() * b.value(), a.idx, b.idx, b.value(), a.value()));
}

inline Var operator/(const Var& a, const Var& b) {
  if (b.is_const()) return a * Var(1.0 / b.cval);
  double bv = b.value();
  if (a.is_const())
    return Var(b.tape, b.tape->push(a.cval / bv, b.idx, -1, -a.cval / (bv * bv), 0.0));
  assert(a.tape == b.tape);
  double av = a.value();
  return Var(a.tape, a.tape->push(av / bv, a.idx, b.idx, 1.0 / bv, -av / (bv * bv)));
}

inline Var exp(const Var& a) {
  if (a.is_const()) return Var(std::exp(a.cval));
  double v = std::exp(a.value());
  return Var(a.tape, a.tape->push(v, a.idx, -1, v, 0.0));
}

inline Var log(const Var& a) {
  if (a.is_const()) return Var(std::log(a.cval));
  double v = a.value();
  return Var(a.tape, a.tape->push(std::log(v), a.idx, -1, 1.0 / v, 0.0));
}

inline Var pow(const Var& a, double e) {
  if (a.is_const()) return Var(std::pow(a.cval, e));
  double v = a.value();
  return Var(a.tape, a.tape->push(std::pow(v, e), a.idx, -1, e * std::pow(v, e - 1.0), 0.0));
}

// Exact max; the gradient flows entirely through the winning branch
// (first operand on exact ties). The choice is recorded on the tape.
inline Var vmax(const Var& a, const Var& b) {
  bool a_wins = a.value() >= b.value();
  Tape* t = a.tape ? a.tape : b.tape;
  if (t) t->note(a_wins);
  if (!t) return Var(a_wins ? a.cval : b.cval);
  const Var& w = a_wins ? a : b;
  if (w.is_const()) return Var(t, t->push(w.cval, -1, -1, 0.0, 0.0));
  return w;
}

inline Var vmin(const Var& a, const Var& b) {
  bool a_wins = a.value() <= b.value();
  Tape* t = a.tape ? a.tape : b.tape;
  if (t) t->note(a_wins);
  if (!t) return Var(a_wins ? a.cval : b.cval);
  const Var& w = a_wins ? a : b;
  if (w.is_const()) return Var(t, t->push(w.cval, -1, -1, 0.0, 0.0));
  return w;
}

inline std::vector<Var> softmax(const std::vector<Var>& x) {
  Var m = x[0];
  for (std::size_t i = 1; i < x.size(); ++i) m = vmax(m, x[i]);
  std::vector<Var> e(x.size());
  Var s(0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = exp(x[i] - m);
    s = s + e[i];
  }
  for (auto& v : e) v = v / s;
  return e;
}

using ObjectiveFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct EvalResult {
  double value = 0.0;
  std::vector<double> grad;
  std::vector<std::uint8_t> signature;
};

// Evaluates the objective on a fresh tape and back-propagates.
EvalResult grad(const ObjectiveFn& f, const std::vector<double>& x);

struct FdCheckResult {
  std::vector<double> rel_err;  // per coordinate
  std::vector<char> excluded;   // branch signature changed within the step
  double max_included_err = 0.0;
};

// Central differences with per-coordinate step h*max(|x_i|, 1).
// Coordinates whose +/- step evaluations take different discrete
// branches are flagged excluded rather than compared.
FdCheckResult fd_check(const ObjectiveFn& f, const std::vector<double>& x,
                       double h);

}  // namespace dosa::ad
