#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tista/recovery.hpp"
#include "tista/sensing.hpp"
#include "tista/signal_model.hpp"
#include "tista/train.hpp"

namespace tista {

enum class Algorithm { Ista, Amp, Oamp, Tista, TistaMr, TistaLmmse };

std::string_view to_string(Algorithm algorithm);
Algorithm parse_algorithm(std::string_view name);  // throws ConfigError
std::vector<Algorithm> parse_algorithm_list(std::string_view csv);
bool is_trainable(Algorithm algorithm);

struct Seeds {
  std::uint64_t matrix = 1;
  std::uint64_t train = 2;
  std::uint64_t eval = 3;
};

struct Sweep {
  std::string parameter;  // "snr_db" or "kappa"
  std::vector<double> values;
};

struct ExperimentConfig {
  EnsembleSpec ensemble = EnsembleSpec::gaussian(250, 500, 0.0, 1.0 / 250.0);
  SparseSignalPrior prior = SparseSignalPrior::bernoulli_gaussian(0.1, 1.0);
  std::optional<double> snr_db = 40.0;  // empty: noiseless
  std::size_t iterations = 12;
  std::vector<Algorithm> algorithms = {Algorithm::Tista};
  std::size_t trials = 1000;
  TrainConfig train;
  double beta_reg = 5.0e-4;
  double amp_theta = 1.14;
  std::optional<double> ista_step;  // default 1 / lambda_max(A^T A)
  double ista_lambda = 0.05;         // ISTA threshold = step * lambda
  std::optional<double> mean_offset; // TISTA-MR; empirical entry mean when empty
  double epsilon = kDefaultEpsilon;
  Seeds seeds;
  unsigned threads = 1;
  bool record_timing = false;
  // TISTA rows at iteration t use the parameters trained for depth t.
  bool tista_per_generation = true;
  // Trained parameters to use instead of training.
  std::map<Algorithm, TistaParams> preset_params;
  std::optional<Sweep> sweep;

  void validate() const;  // throws ConfigError naming the field
};

// Flat "key = value" text, '#' comments.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

struct NmseCurve {
  std::vector<double> nmse_db;  // index t = NMSE of s_t
  std::size_t trials = 0;
  std::size_t diverged = 0;

  double divergence_fraction() const {
    return trials == 0 ? 0.0 : static_cast<double>(diverged) / static_cast<double>(trials);
  }
};

// Maps an observation to a recovery trace of at least `iterations` rounds.
using Runner = std::function<RecoveryTrace(const Eigen::VectorXd& y)>;

// Per-trial relative errors ||s_t - x||^2 / ||x||^2 (empty = diverged)
// reduced in trial order to 10 log10 of their mean, floored at kNmseFloorDb.
NmseCurve reduce_nmse(std::span<const std::vector<double>> per_trial_ratios, std::size_t iterations);

// Fresh (x, w) per trial from stream derive_seed(seed, trial); the matrix
// is fixed. Results do not depend on `threads`.
NmseCurve evaluate_nmse(const SensingSystem& observation, const Runner& run, const SparseSignalPrior& prior,
                        std::size_t iterations, std::size_t trials, std::uint64_t seed, unsigned threads = 1);

struct ResultRow {
  std::string algorithm;
  std::size_t iteration = 0;
  double nmse_db = 0.0;
  double divergence_fraction = 0.0;
  double wallclock_ms = 0.0;
};

using ResultTable = std::vector<ResultRow>;

struct ExperimentResult {
  ResultTable table;
  std::map<Algorithm, TrainResult> trained;
  Eigen::MatrixXd matrix;
  double noise_var = 0.0;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

// Header "algorithm,iteration,nmse_db,divergence_fraction,wallclock_ms";
// numbers with 6 significant digits, LF line endings.
void write_csv(std::ostream& out, const ResultTable& table);
void emit_csv(const ResultTable& table, const std::filesystem::path& path);
ResultTable parse_csv(std::istream& in);

struct SweepPoint {
  double value = 0.0;
  ResultTable table;
};

std::vector<SweepPoint> run_sweep(const ExperimentConfig& config);
void write_sweep_csv(std::ostream& out, const std::string& parameter, const std::vector<SweepPoint>& points);

}  // namespace tista
