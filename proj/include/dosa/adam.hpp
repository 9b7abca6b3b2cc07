#pragma once

#include <cmath>
#include <vector>

namespace dosa {

// Adam with bias correction.
class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& x, const std::vector<double>& g) {
    ++t_;
    double c1 = 1.0 - std::pow(b1_, t_);
    double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < x.size(); ++i) {
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * g[i];
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * g[i] * g[i];
      x[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace dosa
