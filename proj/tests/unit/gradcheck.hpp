#pragma once

#include "pisoc/ad.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <vector>

namespace testing {

using pisoc::ad::Matrix;
using pisoc::ad::Tape;
using pisoc::ad::Var;

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Largest relative deviation between the taped gradient of
// sum(f(inputs) .* weights) and central differences in every input entry.
inline double gradient_error(const std::vector<Matrix>& inputs,
                             const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                             double h = 1e-5) {
  Matrix weights;
  auto scalar = [&](const std::vector<Matrix>& values, std::vector<Matrix>* grads) {
    Tape tape;
    std::vector<Var> vars;
    for (const Matrix& v : values) vars.push_back(tape.variable(v));
    const Var out = f(tape, vars);
    if (weights.size() == 0) weights = random_matrix(out.rows(), out.cols(), 99);
    const double value = (out.value().array() * weights.array()).sum();
    if (grads != nullptr) {
      tape.backward(out, weights);
      for (const Var& v : vars) grads->push_back(tape.grad(v));
    }
    return value;
  };
  std::vector<Matrix> analytic;
  scalar(inputs, &analytic);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      std::vector<Matrix> plus = inputs;
      std::vector<Matrix> minus = inputs;
      plus[k].data()[i] += h;
      minus[k].data()[i] -= h;
      const double numeric = (scalar(plus, nullptr) - scalar(minus, nullptr)) / (2.0 * h);
      const double a = analytic[k].data()[i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

}  // namespace testing
