#pragma once

// Reference computations used only by the tests. They evaluate the same
// quantities as the library by a different route (quadrature, direct
// summation, Monte Carlo, dense recomputation).

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Posterior mean E[X | Y = y] for X ~ (1-p) delta_0 + p N(0, alpha2) and
// Y = X + N(0, nv), with the slab integrals done by composite Simpson in
// long double over +-12 posterior standard deviations.
inline double bg_posterior_mean(double y, double nv, double alpha2, double p) {
  using ld = long double;
  const ld xi = static_cast<ld>(alpha2) + nv;
  const ld mu = static_cast<ld>(y) * alpha2 / xi;
  const ld sd = std::sqrt(static_cast<ld>(alpha2) * nv / xi);
  const int intervals = 4000;
  const ld lo = mu - 12 * sd;
  const ld h = 24 * sd / intervals;
  const ld pi = 3.14159265358979323846264338327950288L;
  auto joint = [&](ld x) {
    const ld a = -x * x / (2 * static_cast<ld>(alpha2)) - (y - x) * (y - x) / (2 * static_cast<ld>(nv));
    return std::exp(a) / (2 * pi * std::sqrt(static_cast<ld>(alpha2) * nv));
  };
  ld z = 0, m1 = 0;
  for (int i = 0; i <= intervals; ++i) {
    const ld x = lo + h * i;
    const ld w = (i == 0 || i == intervals) ? 1 : (i % 2 == 1 ? 4 : 2);
    const ld f = joint(x);
    z += w * f;
    m1 += w * x * f;
  }
  z *= h / 3;
  m1 *= h / 3;
  const ld spike = (1 - static_cast<ld>(p)) * std::exp(-static_cast<ld>(y) * y / (2 * static_cast<ld>(nv))) /
                   std::sqrt(2 * pi * nv);
  return static_cast<double>(p * m1 / (spike + p * z));
}

// E[X | y] for X ~ (1-p) delta_0 + p Uniform(support), by summing the
// joint probability of every atom.
inline double discrete_posterior_mean(double y, double nv, double p, const std::vector<double>& support) {
  using ld = long double;
  auto phi = [&](ld z) { return std::exp(-z * z / (2 * static_cast<ld>(nv))); };
  ld num = 0, den = (1 - static_cast<ld>(p)) * phi(y);
  for (double s : support) {
    const ld w = static_cast<ld>(p) / support.size() * phi(y - static_cast<ld>(s));
    num += s * w;
    den += w;
  }
  return static_cast<double>(num / den);
}

// Relative error with a 1e-14 absolute floor for values that are zero up to
// quadrature roundoff.
inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-14);
}

// Moore-Penrose pseudo-inverse of a full-row-rank matrix via complete
// orthogonal decomposition.
inline Eigen::MatrixXd pinv(const Eigen::MatrixXd& A) {
  return A.completeOrthogonalDecomposition().pseudoInverse();
}

}  // namespace oracle
