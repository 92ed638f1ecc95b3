#include <algorithm>
#include "tista/train.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "tista/errors.hpp"

namespace tista {

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double lr,
               const AdamHyper& hyper) {
  if (params.size() != grads.size() || state.m.size() != grads.size() || state.v.size() != grads.size()) {
    throw ShapeError("adam_step: state, params and gradient sizes differ");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grads[i];
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
}

void TrainConfig::validate() const {
  if (minibatch_size < 1) throw ConfigError("minibatch_size", "must be >= 1");
  if (batches_per_generation < 1) throw ConfigError("batches_per_generation", "must be >= 1");
  if (max_generation < 1) throw ConfigError("max_generation", "must be >= 1");
  if (!(lr.early > 0.0)) throw ConfigError("lr_early", "must be positive");
  if (!(lr.late > 0.0)) throw ConfigError("lr_late", "must be positive");
  if (!std::isfinite(gamma_init)) throw ConfigError("gamma_init", "must be finite");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon", "must be positive");
}

namespace {

constexpr double kMinAlpha2 = 1e-6;
constexpr double kMinP = 1e-6;

double logit(double p) { return std::log(p) - std::log1p(-p); }
double logistic(double z) { return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

TrainResult train_unrolled(const SensingSystem& system, const SparseSignalPrior& prior, const TrainConfig& config,
                           const BatchSource& source) {
  config.validate();
  TrainResult result;
  TistaParams& params = result.params;
  if (config.train_alpha_p) {
    params.shrinkage = config.shrinkage_init.value_or(ShrinkageParams{prior.alpha2, prior.p});
    params.validate();
  }

  for (std::size_t gen = 1; gen <= config.max_generation; ++gen) {
    params.gammas.push_back(config.gamma_init);
    const std::size_t dim = params.trainable_count();

    // Optimizer coordinates: gammas, then (alpha2, p) either directly or as
    // log(alpha2) and logit(p).
    const bool log_coords = config.shrinkage_coordinates == ShrinkageCoordinates::LogLogit;
    std::vector<double> coords(params.gammas);
    if (params.shrinkage) {
      coords.push_back(log_coords ? std::log(params.shrinkage->alpha2) : params.shrinkage->alpha2);
      coords.push_back(log_coords ? logit(params.shrinkage->p) : params.shrinkage->p);
    }
    AdamState state(dim);
    const double lr = config.lr.at(gen);
    double last_loss = 0.0;

    for (std::size_t b = 0; b < config.batches_per_generation; ++b) {
      const Batch batch = source(gen, b);
      LossAndGradient lg;
      try {
        lg = loss_and_gradient(system, batch, params, gen, prior, config.variant, config.epsilon);
      } catch (const TrainingDivergenceError& e) {
        throw TrainingDivergenceError(std::string("training diverged in generation ") + std::to_string(gen) + ": " +
                                          e.what(),
                                      gen);
      }
      last_loss = lg.loss;
      if (params.shrinkage && log_coords) {
        lg.grads[gen] *= params.shrinkage->alpha2;
        lg.grads[gen + 1] *= params.shrinkage->p * (1.0 - params.shrinkage->p);
      }
      adam_step(state, coords, lg.grads, lr);
      for (std::size_t k = 0; k < gen; ++k) params.gammas[k] = coords[k];
      if (params.shrinkage) {
        if (log_coords) {
          params.shrinkage->alpha2 = std::exp(coords[gen]);
          params.shrinkage->p = logistic(coords[gen + 1]);
        } else {
          coords[gen] = std::max(coords[gen], kMinAlpha2);
          coords[gen + 1] = std::clamp(coords[gen + 1], kMinP, 1.0);
          params.shrinkage->alpha2 = coords[gen];
          params.shrinkage->p = coords[gen + 1];
        }
      }
      for (double c : coords) {
        if (!std::isfinite(c)) {
          throw TrainingDivergenceError("non-finite parameter in generation " + std::to_string(gen), gen);
        }
      }
    }
    result.generations.push_back(GenerationRecord{gen, last_loss, params});
  }
  return result;
}

BatchSource synthetic_batches(const SensingSystem& system, const SparseSignalPrior& prior, Eigen::Index size,
                              std::uint64_t seed) {
  return [&system, prior, size, seed](std::size_t generation, std::size_t index) {
    Rng rng(derive_seed(seed, generation, index));
    return sample_batch(system, prior, size, rng);
  };
}

TrainResult incremental_train(const SensingSystem& system, const SparseSignalPrior& prior,
                              const TrainConfig& config) {
  return train_unrolled(system, prior, config, synthetic_batches(system, prior, config.minibatch_size, config.seed));
}

void write_params(std::ostream& out, const TistaParams& params) {
  out << std::setprecision(17);
  for (std::size_t t = 0; t < params.gammas.size(); ++t) {
    out << "gamma[" << t << "] = " << params.gammas[t] << '\n';
  }
  if (params.shrinkage) {
    out << "alpha2 = " << params.shrinkage->alpha2 << '\n';
    out << "p = " << params.shrinkage->p << '\n';
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& field, const std::string& text) {
  double value = 0.0;
  const auto* begin = text.data();
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(field, "not a number: '" + text + "'");
  return value;
}

}  // namespace

TistaParams read_params(std::istream& in) {
  std::map<std::size_t, double> gammas;
  std::optional<double> alpha2;
  std::optional<double> p;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "alpha2") {
      alpha2 = parse_double(key, value);
    } else if (key == "p") {
      p = parse_double(key, value);
    } else if (key.rfind("gamma[", 0) == 0 && key.back() == ']') {
      const std::string index = key.substr(6, key.size() - 7);
      std::size_t t = 0;
      const auto [ptr, ec] = std::from_chars(index.data(), index.data() + index.size(), t);
      if (ec != std::errc() || ptr != index.data() + index.size()) throw ConfigError(key, "bad index");
      if (!gammas.emplace(t, parse_double(key, value)).second) throw ConfigError(key, "duplicate entry");
    } else {
      throw ConfigError(key, "unknown parameter");
    }
  }
  TistaParams params;
  for (const auto& [t, g] : gammas) {
    if (t != params.gammas.size()) throw ConfigError("gamma[" + std::to_string(params.gammas.size()) + "]", "missing");
    params.gammas.push_back(g);
  }
  if (alpha2.has_value() != p.has_value()) throw ConfigError("alpha2/p", "must be given together");
  if (alpha2) params.shrinkage = ShrinkageParams{*alpha2, *p};
  params.validate();
  return params;
}

void save_params(const std::filesystem::path& path, const TistaParams& params) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_params(out, params);
  if (!out) throw IoError("write failed: " + path.string());
}

TistaParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_params(in);
}

}  // namespace tista
