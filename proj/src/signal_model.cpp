#include "tista/signal_model.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <string>

#include "tista/errors.hpp"

namespace tista {

SparseSignalPrior SparseSignalPrior::bernoulli_gaussian(double p, double alpha2) {
  SparseSignalPrior prior;
  prior.kind = PriorKind::BernoulliGaussian;
  prior.p = p;
  prior.alpha2 = alpha2;
  prior.validate();
  return prior;
}

SparseSignalPrior SparseSignalPrior::finite_discrete(double p, std::vector<double> support) {
  SparseSignalPrior prior;
  prior.kind = PriorKind::FiniteDiscrete;
  prior.p = p;
  prior.support = std::move(support);
  prior.validate();
  return prior;
}

void SparseSignalPrior::validate() const {
  if (!(p > 0.0 && p <= 1.0)) {
    throw ParameterError("prior: p must lie in (0, 1], got " + std::to_string(p));
  }
  if (kind == PriorKind::BernoulliGaussian) {
    if (!(alpha2 > 0.0) || !std::isfinite(alpha2)) {
      throw ParameterError("prior: alpha2 must be positive, got " + std::to_string(alpha2));
    }
    return;
  }
  if (support.empty()) {
    throw ParameterError("prior: discrete support is empty");
  }
  std::set<double> seen;
  for (double s : support) {
    if (!std::isfinite(s)) throw ParameterError("prior: non-finite support value");
    if (!seen.insert(s).second) {
      throw ParameterError("prior: duplicate support value " + std::to_string(s));
    }
  }
}

double SparseSignalPrior::second_moment() const {
  if (kind == PriorKind::BernoulliGaussian) return p * alpha2;
  double acc = 0.0;
  for (double s : support) acc += s * s;
  return p * acc / static_cast<double>(support.size());
}

Eigen::VectorXd sample_signal(const SparseSignalPrior& prior, Eigen::Index n, Rng& rng) {
  prior.validate();
  if (n < 1) throw ParameterError("sample_signal: dimension must be >= 1");

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> slab(0.0, std::sqrt(prior.alpha2));
  std::uniform_int_distribution<std::size_t> pick(0, prior.support.empty() ? 0 : prior.support.size() - 1);

  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (unit(rng) >= prior.p) {
      x[i] = 0.0;
    } else if (prior.kind == PriorKind::BernoulliGaussian) {
      x[i] = slab(rng);
    } else {
      x[i] = prior.support[pick(rng)];
    }
  }
  return x;
}

double eta_soft(double r, double tau) {
  if (tau < 0.0) throw ParameterError("eta_soft: threshold must be >= 0");
  const double mag = std::abs(r) - tau;
  if (mag <= 0.0) return 0.0;
  return r > 0.0 ? mag : -mag;
}

Eigen::VectorXd eta_soft(const Eigen::VectorXd& r, double tau) {
  if (tau < 0.0) throw ParameterError("eta_soft: threshold must be >= 0");
  return r.unaryExpr([tau](double v) {
    const double mag = std::abs(v) - tau;
    return mag <= 0.0 ? 0.0 : (v > 0.0 ? mag : -mag);
  });
}

double eta_mmse_bg(double y, double noise_var, const SparseSignalPrior& prior) {
  if (prior.kind != PriorKind::BernoulliGaussian) {
    throw ParameterError("eta_mmse_bg: prior must be Bernoulli-Gaussian");
  }
  prior.validate();
  if (!(noise_var > 0.0)) throw ParameterError("eta_mmse_bg: noise variance must be positive");
  return BgDenoiser(noise_var, prior.alpha2, prior.p).value(y);
}

MmsePartials eta_mmse_bg_partials(double y, double noise_var, double alpha2, double p) {
  if (!(noise_var > 0.0)) throw ParameterError("eta_mmse_bg: noise variance must be positive");
  return BgDenoiser(noise_var, alpha2, p).partials(y);
}

double eta_mmse_discrete(double y, double noise_var, const SparseSignalPrior& prior) {
  if (prior.kind != PriorKind::FiniteDiscrete) {
    throw ParameterError("eta_mmse_discrete: prior must be finite-discrete");
  }
  prior.validate();
  if (!(noise_var > 0.0)) throw ParameterError("eta_mmse_discrete: noise variance must be positive");

  // Posterior weights in the log domain; the common 1/sqrt(2 pi nv) cancels.
  const double inv2v = 0.5 / noise_var;
  const double log_atom = std::log(prior.p) - std::log(static_cast<double>(prior.support.size()));
  const double log_zero = prior.p < 1.0 ? std::log1p(-prior.p) - y * y * inv2v
                                        : -std::numeric_limits<double>::infinity();

  double top = log_zero;
  for (double s : prior.support) top = std::max(top, log_atom - (y - s) * (y - s) * inv2v);

  double num = 0.0;
  double den = std::exp(log_zero - top);
  for (double s : prior.support) {
    const double w = std::exp(log_atom - (y - s) * (y - s) * inv2v - top);
    num += s * w;
    den += w;
  }
  return num / den;
}

double calibrate_noise_var(const Eigen::MatrixXd& A, const SparseSignalPrior& prior, double snr_db) {
  if (!std::isfinite(snr_db)) throw ParameterError("calibrate_noise_var: SNR must be finite");
  if (A.rows() == 0) throw ParameterError("calibrate_noise_var: empty matrix");
  const double snr = std::pow(10.0, snr_db / 10.0);
  return prior.second_moment() * A.squaredNorm() / (static_cast<double>(A.rows()) * snr);
}

}  // namespace tista
