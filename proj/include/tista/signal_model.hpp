#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "tista/random.hpp"

namespace tista {

enum class PriorKind { BernoulliGaussian, FiniteDiscrete };

// Spike-and-slab prior: zero with probability 1-p, otherwise drawn from a
// zero-mean Gaussian of variance alpha2 (BernoulliGaussian) or uniformly from
// a finite support set (FiniteDiscrete).
struct SparseSignalPrior {
  PriorKind kind = PriorKind::BernoulliGaussian;
  double p = 0.1;
  double alpha2 = 1.0;
  std::vector<double> support;

  static SparseSignalPrior bernoulli_gaussian(double p, double alpha2);
  static SparseSignalPrior finite_discrete(double p, std::vector<double> support);

  // Throws ParameterError on an invalid parameter set.
  void validate() const;

  // E[X^2] per entry.
  double second_moment() const;
};

Eigen::VectorXd sample_signal(const SparseSignalPrior& prior, Eigen::Index n, Rng& rng);

double eta_soft(double r, double tau);
Eigen::VectorXd eta_soft(const Eigen::VectorXd& r, double tau);

double eta_mmse_bg(double y, double noise_var, const SparseSignalPrior& prior);
double eta_mmse_discrete(double y, double noise_var, const SparseSignalPrior& prior);

// Value and first partial derivatives of the Bernoulli-Gaussian posterior mean
// with respect to the observation, the channel variance and both prior
// parameters.
struct MmsePartials {
  double value;
  double d_y;
  double d_noise_var;
  double d_alpha2;
  double d_p;
};

// Bernoulli-Gaussian posterior mean for a fixed channel variance. The
// per-variance constants are hoisted so that evaluation costs one exp; the
// slab responsibility is evaluated as a logistic of the log odds, which stays
// finite for any finite y and any noise_var > 0.
class BgDenoiser {
 public:
  BgDenoiser(double noise_var, double alpha2, double p)
      : nv_(noise_var),
        alpha2_(alpha2),
        p_(p),
        xi_(alpha2 + noise_var),
        gain_(alpha2 / (alpha2 + noise_var)),
        prec_gap_(alpha2 / (noise_var * (alpha2 + noise_var))),
        base_odds_(std::log1p(-p) - std::log(p) + 0.5 * std::log((alpha2 + noise_var) / noise_var)) {}

  // Posterior probability that the entry came from the slab.
  double slab(double y) const {
    const double l = base_odds_ - 0.5 * y * y * prec_gap_;
    if (l > 0.0) {
      const double e = std::exp(-l);
      return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(l));
  }

  double value(double y) const { return y * gain_ * slab(y); }

  double slope(double y) const {
    const double pi = slab(y);
    return gain_ * pi + gain_ * y * y * pi * (1.0 - pi) * prec_gap_;
  }

  MmsePartials partials(double y) const {
    const double pi = slab(y);
    const double w = pi * (1.0 - pi);
    const double y2 = y * y;
    MmsePartials out{};
    out.value = y * gain_ * pi;
    out.d_y = gain_ * pi + gain_ * y2 * w * prec_gap_;
    const double dl_dnv = -0.5 * prec_gap_ + 0.5 * y2 * alpha2_ * (xi_ + nv_) / (nv_ * nv_ * xi_ * xi_);
    out.d_noise_var = y * (-(alpha2_ / (xi_ * xi_)) * pi - gain_ * w * dl_dnv);
    const double dl_da = 0.5 / xi_ - 0.5 * y2 / (xi_ * xi_);
    out.d_alpha2 = y * ((nv_ / (xi_ * xi_)) * pi - gain_ * w * dl_da);
    out.d_p = w > 0.0 ? y * gain_ * w / (p_ * (1.0 - p_)) : 0.0;
    return out;
  }

 private:
  double nv_;
  double alpha2_;
  double p_;
  double xi_;
  double gain_;
  double prec_gap_;
  double base_odds_;
};

inline double eta_mmse_bg(double y, double noise_var, double alpha2, double p) {
  return BgDenoiser(noise_var, alpha2, p).value(y);
}

MmsePartials eta_mmse_bg_partials(double y, double noise_var, double alpha2, double p);

// sigma^2 such that E||Ax||^2 / E||w||^2 = 10^(snr_db/10) for the realized A.
double calibrate_noise_var(const Eigen::MatrixXd& A, const SparseSignalPrior& prior, double snr_db);

}  // namespace tista
