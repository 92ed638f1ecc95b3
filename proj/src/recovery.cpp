#include "tista/recovery.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>

#include "tista/errors.hpp"

namespace tista {

namespace {

void guard_divergence(const Eigen::VectorXd& s, std::size_t iteration, const char* engine) {
  if (!s.allFinite() || s.lpNorm<Eigen::Infinity>() > kDivergenceBound) {
    throw DivergenceError(std::string(engine) + " diverged at iteration " + std::to_string(iteration),
                          iteration);
  }
}

void check_observation(const SensingSystem& system, const Eigen::VectorXd& y) {
  if (y.size() != system.m()) {
    throw ShapeError("observation length " + std::to_string(y.size()) + " does not match m = " +
                     std::to_string(system.m()));
  }
}

RecoveryTrace start_trace(Eigen::Index n, std::size_t iterations) {
  RecoveryTrace trace;
  trace.iterations.reserve(iterations + 1);
  trace.iterations.push_back(IterationRecord{Eigen::VectorXd::Zero(n), {}, {}, {}, {}});
  return trace;
}

RecoveryTrace run_tista_impl(const SensingSystem& system, const Eigen::VectorXd& y, const TistaParams& params,
                             const SparseSignalPrior& prior, std::optional<std::size_t> iterations,
                             double epsilon, bool center) {
  check_observation(system, y);
  params.validate();
  const std::size_t rounds = iterations.value_or(params.rounds());
  if (rounds > params.rounds()) {
    throw ConfigError("gammas", "requested " + std::to_string(rounds) + " rounds but only " +
                                    std::to_string(params.rounds()) + " step sizes are available");
  }
  const ShrinkageParams shrink = params.shrinkage_or(prior);
  const double m = static_cast<double>(system.m());

  RecoveryTrace trace = start_trace(system.n(), rounds);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(system.n());
  for (std::size_t t = 0; t < rounds; ++t) {
    const double gamma = params.gammas[t];
    Eigen::VectorXd residual = y - system.A() * s;
    if (center) residual.array() -= residual.sum() / m;

    const double v2 = estimate_v2_from_residual(system, residual.squaredNorm(), epsilon);
    const double tau2 = estimate_tau2(system, v2, gamma);
    Eigen::VectorXd r = s + gamma * (system.W() * residual);
    const BgDenoiser denoiser(tau2, shrink.alpha2, shrink.p);
    s = r.unaryExpr([&](double v) { return denoiser.value(v); });
    guard_divergence(s, t + 1, "TISTA");
    trace.iterations.push_back(IterationRecord{s, std::move(r), v2, tau2, {}});
  }
  return trace;
}

}  // namespace

ShrinkageParams TistaParams::shrinkage_or(const SparseSignalPrior& prior) const {
  if (shrinkage) return *shrinkage;
  if (prior.kind != PriorKind::BernoulliGaussian) {
    throw ParameterError("TISTA shrinkage requires a Bernoulli-Gaussian prior");
  }
  return ShrinkageParams{prior.alpha2, prior.p};
}

void TistaParams::validate() const {
  for (std::size_t t = 0; t < gammas.size(); ++t) {
    if (!std::isfinite(gammas[t])) throw ConfigError("gamma[" + std::to_string(t) + "]", "not finite");
  }
  if (shrinkage) {
    if (!(shrinkage->alpha2 > 0.0) || !std::isfinite(shrinkage->alpha2)) {
      throw ConfigError("alpha2", "must be positive");
    }
    if (!(shrinkage->p > 0.0 && shrinkage->p < 1.0)) throw ConfigError("p", "must lie in (0, 1)");
  }
}

double nmse_db(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  const double ratio = (estimate - truth).squaredNorm() / truth.squaredNorm();
  if (!(ratio > 0.0)) return kNmseFloorDb;
  return std::max(kNmseFloorDb, 10.0 * std::log10(ratio));
}

void attach_nmse(RecoveryTrace& trace, const Eigen::VectorXd& truth) {
  for (auto& record : trace.iterations) record.nmse_db = nmse_db(record.s, truth);
}

double estimate_v2_from_residual(const SensingSystem& system, double residual_sq, double epsilon) {
  if (!(epsilon > 0.0)) throw ParameterError("estimate_v2: epsilon must be positive");
  const double m = static_cast<double>(system.m());
  const double v2 = (residual_sq - m * system.noise_var()) / system.tr_AtA();
  return v2 > epsilon ? v2 : epsilon;
}

double estimate_v2(const SensingSystem& system, const Eigen::VectorXd& y, const Eigen::VectorXd& s,
                   double epsilon) {
  check_observation(system, y);
  if (s.size() != system.n()) throw ShapeError("estimate_v2: estimate length mismatch");
  return estimate_v2_from_residual(system, (y - system.A() * s).squaredNorm(), epsilon);
}

double estimate_tau2(const SensingSystem& system, double v2, double gamma) {
  const double n = static_cast<double>(system.n());
  const double m = static_cast<double>(system.m());
  const double tau2 =
      v2 / n * (n + (gamma * gamma - 2.0 * gamma) * m) + gamma * gamma * system.noise_var() / n * system.tr_WWt();
  if (!(tau2 >= 0.0) || !std::isfinite(tau2)) {
    throw ParameterError("estimate_tau2: non-positive variance estimate " + std::to_string(tau2));
  }
  return tau2;
}

double estimate_tau2_oamp(const SensingSystem& system, double v2) {
  const double n = static_cast<double>(system.n());
  const double tau2 = system.tr_BBt() / n * v2 + system.tr_WWt() / n * system.noise_var();
  if (!(tau2 >= 0.0) || !std::isfinite(tau2)) {
    throw ParameterError("estimate_tau2_oamp: non-positive variance estimate " + std::to_string(tau2));
  }
  return tau2;
}

double ista_default_step(const SensingSystem& system) {
  const double smax = system.singular_values().maxCoeff();
  return 1.0 / (smax * smax);
}

RecoveryTrace run_ista(const SensingSystem& system, const Eigen::VectorXd& y, std::size_t iterations,
                       double step, double threshold) {
  check_observation(system, y);
  if (threshold < 0.0) throw ParameterError("run_ista: threshold must be >= 0");

  RecoveryTrace trace = start_trace(system.n(), iterations);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(system.n());
  for (std::size_t t = 0; t < iterations; ++t) {
    Eigen::VectorXd r = s + step * (system.A().transpose() * (y - system.A() * s));
    s = eta_soft(r, threshold);
    guard_divergence(s, t + 1, "ISTA");
    trace.iterations.push_back(IterationRecord{s, std::move(r), {}, {}, {}});
  }
  return trace;
}

RecoveryTrace run_amp(const SensingSystem& system, const Eigen::VectorXd& y, std::size_t iterations,
                      double theta) {
  check_observation(system, y);
  const double m = static_cast<double>(system.m());

  RecoveryTrace trace = start_trace(system.n(), iterations);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(system.n());
  Eigen::VectorXd residual = Eigen::VectorXd::Zero(system.m());
  for (std::size_t t = 0; t < iterations; ++t) {
    const double onsager = static_cast<double>((s.array() != 0.0).count()) / m;
    residual = y - system.A() * s + onsager * residual;
    const double residual_sq = residual.squaredNorm();
    const double threshold = theta / std::sqrt(m) * std::sqrt(residual_sq);
    Eigen::VectorXd pseudo = s + system.A().transpose() * residual;
    s = eta_soft(pseudo, threshold);
    guard_divergence(s, t + 1, "AMP");
    if (!std::isfinite(residual_sq)) throw DivergenceError("AMP residual is not finite", t + 1);
    trace.iterations.push_back(IterationRecord{s, std::move(pseudo), {}, residual_sq / m, {}});
  }
  return trace;
}

RecoveryTrace run_oamp(const SensingSystem& system, const Eigen::VectorXd& y, std::size_t iterations,
                       const SparseSignalPrior& prior, double epsilon) {
  check_observation(system, y);
  if (prior.kind != PriorKind::BernoulliGaussian) {
    throw ParameterError("run_oamp: the divergence-free denoiser needs a Bernoulli-Gaussian prior");
  }
  prior.validate();
  const double n = static_cast<double>(system.n());

  RecoveryTrace trace = start_trace(system.n(), iterations);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(system.n());
  for (std::size_t t = 0; t < iterations; ++t) {
    const Eigen::VectorXd residual = y - system.A() * s;
    const double v2 = estimate_v2_from_residual(system, residual.squaredNorm(), epsilon);
    const double tau2 = estimate_tau2_oamp(system, v2);
    Eigen::VectorXd r = s + system.W() * residual;

    // Divergence-free transform C (eta(r) - <eta'> r) with C = 1 / (1 - <eta'>).
    const BgDenoiser denoiser(tau2, prior.alpha2, prior.p);
    Eigen::VectorXd denoised(r.size());
    double mean_slope = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      denoised[i] = denoiser.value(r[i]);
      mean_slope += denoiser.slope(r[i]);
    }
    mean_slope /= n;
    if (!(1.0 - mean_slope > 1e-12)) {
      throw DivergenceError("OAMP divergence-free normalization is singular", t + 1);
    }
    s = (denoised - mean_slope * r) / (1.0 - mean_slope);
    guard_divergence(s, t + 1, "OAMP");
    trace.iterations.push_back(IterationRecord{s, std::move(r), v2, tau2, {}});
  }
  return trace;
}

RecoveryTrace run_tista(const SensingSystem& system, const Eigen::VectorXd& y, const TistaParams& params,
                        const SparseSignalPrior& prior, std::optional<std::size_t> iterations, double epsilon) {
  return run_tista_impl(system, y, params, prior, iterations, epsilon, false);
}

RecoveryTrace run_tista_mr(const SensingSystem& system, const Eigen::VectorXd& y, const TistaParams& params,
                           const SparseSignalPrior& prior, std::optional<std::size_t> iterations,
                           double epsilon) {
  return run_tista_impl(system, y, params, prior, iterations, epsilon, system.mean_removed());
}

void write_trace_csv(std::ostream& out, const RecoveryTrace& trace) {
  out << "iter,v2_est,tau2_est,nmse_db\n";
  out << std::setprecision(10);
  for (std::size_t t = 0; t < trace.iterations.size(); ++t) {
    const auto& rec = trace.iterations[t];
    out << t << ',' << rec.v2 << ',' << rec.tau2 << ',' << rec.nmse_db << '\n';
  }
}

void write_trace_csv(const std::filesystem::path& path, const RecoveryTrace& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_trace_csv(out, trace);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace tista
