#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "tista/recovery.hpp"
#include "tista/unrolled.hpp"

namespace tista {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  explicit AdamState(std::size_t dim) : m(dim, 0.0), v(dim, 0.0) {}
};

// One bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double lr,
               const AdamHyper& hyper = {});

struct LearningRateSchedule {
  double early = 4.0e-2;
  std::size_t switch_generation = 10;  // generations 1..switch use `early`
  double late = 8.0e-4;

  double at(std::size_t generation) const { return generation <= switch_generation ? early : late; }
};

// How Adam parametrizes trained (alpha2, p): the raw values (clamped to
// alpha2 >= 1e-6, p in [1e-6, 1]) or log(alpha2) and logit(p).
enum class ShrinkageCoordinates { Direct, LogLogit };

struct TrainConfig {
  Eigen::Index minibatch_size = 1000;
  std::size_t batches_per_generation = 200;
  std::size_t max_generation = 12;
  LearningRateSchedule lr;
  bool train_alpha_p = false;
  std::uint64_t seed = 0;
  double gamma_init = 1.0;
  // Starting (alpha2, p) when train_alpha_p is set; the prior's values otherwise.
  std::optional<ShrinkageParams> shrinkage_init;
  ShrinkageCoordinates shrinkage_coordinates = ShrinkageCoordinates::Direct;
  TistaVariant variant = TistaVariant::Standard;
  double epsilon = kDefaultEpsilon;

  void validate() const;
};

struct GenerationRecord {
  std::size_t generation = 0;
  double final_loss = 0.0;  // loss of the last mini-batch of the generation
  TistaParams params;       // snapshot at the end of the generation
};

struct TrainResult {
  TistaParams params;
  std::vector<GenerationRecord> generations;
};

// Supplies mini-batch `index` of generation `generation` (1-based).
using BatchSource = std::function<Batch(std::size_t generation, std::size_t index)>;

// Incremental (layer-by-layer) training. Generation t appends gamma_{t-1}
// initialized to config.gamma_init, keeps the earlier values as a warm start
// and runs batches_per_generation Adam steps on the depth-t loss. Adam
// moments restart each generation. (alpha2, p) are optimized in log / logit
// coordinates.
TrainResult train_unrolled(const SensingSystem& system, const SparseSignalPrior& prior, const TrainConfig& config,
                           const BatchSource& source);

// train_unrolled with fresh (x, y) pairs drawn from the prior for every batch.
TrainResult incremental_train(const SensingSystem& system, const SparseSignalPrior& prior,
                              const TrainConfig& config);

// Synthetic batch source used by incremental_train.
BatchSource synthetic_batches(const SensingSystem& system, const SparseSignalPrior& prior, Eigen::Index size,
                              std::uint64_t seed);

// Plain-text parameter file: "gamma[t] = value" per line, plus optional
// "alpha2 = value" and "p = value".
void write_params(std::ostream& out, const TistaParams& params);
TistaParams read_params(std::istream& in);
void save_params(const std::filesystem::path& path, const TistaParams& params);
TistaParams load_params(const std::filesystem::path& path);

}  // namespace tista
