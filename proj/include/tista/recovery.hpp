#pragma once

#include <cstddef>
#include <iosfwd>
#include <filesystem>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "tista/sensing.hpp"
#include "tista/signal_model.hpp"

namespace tista {

inline constexpr double kDefaultEpsilon = 1e-9;
inline constexpr double kDivergenceBound = 1e12;
inline constexpr double kNmseFloorDb = -120.0;

struct ShrinkageParams {
  double alpha2 = 1.0;
  double p = 0.1;
};

// The learnable state of a T-round TISTA: one step-size scalar per round,
// plus optionally trained shrinkage-prior parameters shared by all rounds.
struct TistaParams {
  std::vector<double> gammas;
  // Set when (alpha2, p) are trained; otherwise the prior's values are used.
  std::optional<ShrinkageParams> shrinkage;

  std::size_t rounds() const { return gammas.size(); }
  std::size_t trainable_count() const { return gammas.size() + (shrinkage ? 2 : 0); }
  ShrinkageParams shrinkage_or(const SparseSignalPrior& prior) const;
  void validate() const;
};

struct IterationRecord {
  Eigen::VectorXd s;  // estimate after this many iterations
  Eigen::VectorXd r;  // linear-stage output that produced s (empty at t = 0)
  double v2 = std::numeric_limits<double>::quiet_NaN();
  double tau2 = std::numeric_limits<double>::quiet_NaN();
  double nmse_db = std::numeric_limits<double>::quiet_NaN();
};

// Entry t holds s_t; entry 0 is the all-zero start. v2/tau2 of entry t+1 are
// the variance estimates computed from s_t while producing s_{t+1}.
struct RecoveryTrace {
  std::vector<IterationRecord> iterations;

  std::size_t rounds() const { return iterations.empty() ? 0 : iterations.size() - 1; }
  const Eigen::VectorXd& estimate() const { return iterations.back().s; }
};

// 10 log10(||s - x||^2 / ||x||^2), floored at kNmseFloorDb.
double nmse_db(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);
void attach_nmse(RecoveryTrace& trace, const Eigen::VectorXd& truth);

double estimate_v2(const SensingSystem& system, const Eigen::VectorXd& y, const Eigen::VectorXd& s,
                   double epsilon = kDefaultEpsilon);
// Same estimator from a precomputed squared residual norm.
double estimate_v2_from_residual(const SensingSystem& system, double residual_sq, double epsilon);

// tau^2 for r = s + gamma W (y - A s), using tr(Z) = tr(Z Z^T) = m.
double estimate_tau2(const SensingSystem& system, double v2, double gamma);
// tau^2 = tr(B B^T) v2 / n + tr(W W^T) sigma^2 / n with B = I - W A.
double estimate_tau2_oamp(const SensingSystem& system, double v2);

RecoveryTrace run_ista(const SensingSystem& system, const Eigen::VectorXd& y, std::size_t iterations,
                       double step, double threshold);

RecoveryTrace run_amp(const SensingSystem& system, const Eigen::VectorXd& y, std::size_t iterations,
                      double theta);

RecoveryTrace run_oamp(const SensingSystem& system, const Eigen::VectorXd& y, std::size_t iterations,
                       const SparseSignalPrior& prior, double epsilon = kDefaultEpsilon);

// Runs `iterations` rounds (all of params.gammas when omitted).
RecoveryTrace run_tista(const SensingSystem& system, const Eigen::VectorXd& y, const TistaParams& params,
                        const SparseSignalPrior& prior, std::optional<std::size_t> iterations = std::nullopt,
                        double epsilon = kDefaultEpsilon);

// TISTA with residual centering on a system from mean_removed_system().
// When the system carries no offset the centering is skipped and the run is
// identical to run_tista.
RecoveryTrace run_tista_mr(const SensingSystem& system, const Eigen::VectorXd& y, const TistaParams& params,
                           const SparseSignalPrior& prior, std::optional<std::size_t> iterations = std::nullopt,
                           double epsilon = kDefaultEpsilon);

// Largest admissible ISTA step, 1 / lambda_max(A^T A).
double ista_default_step(const SensingSystem& system);

// CSV with columns iter,v2_est,tau2_est,nmse_db.
void write_trace_csv(std::ostream& out, const RecoveryTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const RecoveryTrace& trace);

}  // namespace tista
