#include "tista/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include "tista/errors.hpp"

namespace tista {

namespace {

constexpr std::pair<Algorithm, std::string_view> kAlgorithmNames[] = {
    {Algorithm::Ista, "ista"},   {Algorithm::Amp, "amp"},         {Algorithm::Oamp, "oamp"},
    {Algorithm::Tista, "tista"}, {Algorithm::TistaMr, "tista_mr"}, {Algorithm::TistaLmmse, "tista_lmmse"},
};

}  // namespace

std::string_view to_string(Algorithm algorithm) {
  for (const auto& [a, name] : kAlgorithmNames) {
    if (a == algorithm) return name;
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  for (const auto& [a, n] : kAlgorithmNames) {
    if (n == name) return a;
  }
  throw ConfigError("algorithms", "unknown algorithm '" + std::string(name) + "'");
}

std::vector<Algorithm> parse_algorithm_list(std::string_view csv) {
  std::vector<Algorithm> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    std::string_view item = csv.substr(start, comma == std::string_view::npos ? csv.size() - start : comma - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) {
      const Algorithm a = parse_algorithm(item);
      if (std::find(out.begin(), out.end(), a) != out.end()) {
        throw ConfigError("algorithms", "duplicate algorithm '" + std::string(item) + "'");
      }
      out.push_back(a);
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw ConfigError("algorithms", "list is empty");
  return out;
}

bool is_trainable(Algorithm algorithm) {
  return algorithm == Algorithm::Tista || algorithm == Algorithm::TistaMr || algorithm == Algorithm::TistaLmmse;
}

void ExperimentConfig::validate() const {
  try {
    ensemble.validate();
  } catch (const ParameterError& e) {
    throw ConfigError("ensemble", e.what());
  }
  try {
    prior.validate();
  } catch (const ParameterError& e) {
    throw ConfigError("prior", e.what());
  }
  if (prior.kind != PriorKind::BernoulliGaussian) throw ConfigError("prior", "must be Bernoulli-Gaussian");
  if (snr_db && !std::isfinite(*snr_db)) throw ConfigError("snr_db", "must be finite or 'noiseless'");
  if (iterations < 1) throw ConfigError("iterations", "must be >= 1");
  if (trials < 1) throw ConfigError("trials", "must be >= 1");
  if (algorithms.empty()) throw ConfigError("algorithms", "list is empty");
  if (!(beta_reg > 0.0)) throw ConfigError("beta_reg", "must be positive");
  if (!(amp_theta > 0.0)) throw ConfigError("amp_theta", "must be positive");
  if (ista_step && !(*ista_step > 0.0)) throw ConfigError("ista_step", "must be positive");
  if (!(ista_lambda >= 0.0)) throw ConfigError("ista_lambda", "must be >= 0");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon", "must be positive");
  if (threads < 1) throw ConfigError("threads", "must be >= 1");
  train.validate();
  for (const auto& [algorithm, params] : preset_params) {
    if (params.rounds() < iterations) {
      throw ConfigError("params", "preset parameters for " + std::string(to_string(algorithm)) + " have only " +
                                      std::to_string(params.rounds()) + " rounds");
    }
  }
  if (sweep) {
    if (sweep->parameter != "snr_db" && sweep->parameter != "kappa") {
      throw ConfigError("sweep", "parameter must be snr_db or kappa");
    }
    if (sweep->values.empty()) throw ConfigError("sweep", "no values");
  }
}

NmseCurve reduce_nmse(std::span<const std::vector<double>> per_trial_ratios, std::size_t iterations) {
  NmseCurve curve;
  curve.trials = per_trial_ratios.size();
  std::vector<double> sums(iterations + 1, 0.0);
  std::size_t kept = 0;
  for (const auto& ratios : per_trial_ratios) {
    if (ratios.empty()) {
      ++curve.diverged;
      continue;
    }
    ++kept;
    for (std::size_t t = 0; t <= iterations; ++t) sums[t] += ratios[t];
  }
  curve.nmse_db.resize(iterations + 1);
  for (std::size_t t = 0; t <= iterations; ++t) {
    if (kept == 0) {
      curve.nmse_db[t] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double mean = sums[t] / static_cast<double>(kept);
    curve.nmse_db[t] = mean > 0.0 ? std::max(kNmseFloorDb, 10.0 * std::log10(mean)) : kNmseFloorDb;
  }
  return curve;
}

NmseCurve evaluate_nmse(const SensingSystem& observation, const Runner& run, const SparseSignalPrior& prior,
                        std::size_t iterations, std::size_t trials, std::uint64_t seed, unsigned threads) {
  if (trials < 1) throw ParameterError("evaluate_nmse: trials must be >= 1");
  std::vector<std::vector<double>> ratios(trials);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      Rng rng(derive_seed(seed, k));
      Eigen::VectorXd x = sample_signal(prior, observation.n(), rng);
      while (x.squaredNorm() == 0.0) x = sample_signal(prior, observation.n(), rng);
      const Eigen::VectorXd y = observe(observation, x, rng);
      try {
        const RecoveryTrace trace = run(y);
        if (trace.iterations.size() < iterations + 1) {
          throw ShapeError("evaluate_nmse: runner returned a trace with too few iterations");
        }
        const double energy = x.squaredNorm();
        std::vector<double> r(iterations + 1);
        for (std::size_t t = 0; t <= iterations; ++t) r[t] = (trace.iterations[t].s - x).squaredNorm() / energy;
        ratios[k] = std::move(r);
      } catch (const DivergenceError&) {
        ratios[k].clear();
      }
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(trials)));
  if (workers == 1) {
    work(0, trials);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (trials + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t begin = std::min(trials, w * chunk);
      const std::size_t end = std::min(trials, begin + chunk);
      pool.emplace_back([&, w, begin, end] {
        try {
          work(begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return reduce_nmse(ratios, iterations);
}

namespace {

struct Systems {
  SensingSystem physical;
  std::optional<SensingSystem> regularized;
  std::optional<SensingSystem> mean_removed;
};

const SensingSystem& system_for(Algorithm algorithm, const Systems& systems) {
  switch (algorithm) {
    case Algorithm::TistaLmmse:
      return *systems.regularized;
    case Algorithm::TistaMr:
      return *systems.mean_removed;
    default:
      return systems.physical;
  }
}

Runner make_runner(Algorithm algorithm, const SensingSystem& system, const ExperimentConfig& config,
                   const TistaParams* params, std::size_t rounds) {
  switch (algorithm) {
    case Algorithm::Ista: {
      const double step = config.ista_step.value_or(ista_default_step(system));
      const double threshold = step * config.ista_lambda;
      return [&system, rounds, step, threshold](const Eigen::VectorXd& y) {
        return run_ista(system, y, rounds, step, threshold);
      };
    }
    case Algorithm::Amp:
      return [&system, rounds, theta = config.amp_theta](const Eigen::VectorXd& y) {
        return run_amp(system, y, rounds, theta);
      };
    case Algorithm::Oamp:
      return [&system, rounds, &config](const Eigen::VectorXd& y) {
        return run_oamp(system, y, rounds, config.prior, config.epsilon);
      };
    case Algorithm::Tista:
    case Algorithm::TistaLmmse:
      return [&system, rounds, params, &config](const Eigen::VectorXd& y) {
        return run_tista(system, y, *params, config.prior, rounds, config.epsilon);
      };
    case Algorithm::TistaMr:
      return [&system, rounds, params, &config](const Eigen::VectorXd& y) {
        return run_tista_mr(system, y, *params, config.prior, rounds, config.epsilon);
      };
  }
  throw ConfigError("algorithms", "unhandled algorithm");
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentResult result;

  Rng matrix_rng(config.seeds.matrix);
  result.matrix = generate_matrix(config.ensemble, matrix_rng);
  result.noise_var = config.snr_db ? calibrate_noise_var(result.matrix, config.prior, *config.snr_db) : 0.0;

  const auto needs = [&](Algorithm a) {
    return std::find(config.algorithms.begin(), config.algorithms.end(), a) != config.algorithms.end();
  };
  Systems systems{build_front_end(result.matrix, FrontEnd::pseudo_inverse()).with_noise_var(result.noise_var), {}, {}};
  if (needs(Algorithm::TistaLmmse)) {
    systems.regularized =
        build_front_end(result.matrix, FrontEnd::regularized(config.beta_reg)).with_noise_var(result.noise_var);
  }
  if (needs(Algorithm::TistaMr)) {
    systems.mean_removed = mean_removed_system(result.matrix, config.mean_offset).with_noise_var(result.noise_var);
  }

  const std::size_t T = config.iterations;
  for (const Algorithm algorithm : config.algorithms) {
    const auto started = std::chrono::steady_clock::now();
    const SensingSystem& system = system_for(algorithm, systems);
    const std::string name(to_string(algorithm));

    std::vector<double> nmse(T + 1);
    std::vector<double> divergence(T + 1);
    if (!is_trainable(algorithm)) {
      const NmseCurve curve = evaluate_nmse(systems.physical, make_runner(algorithm, system, config, nullptr, T),
                                            config.prior, T, config.trials, config.seeds.eval, config.threads);
      nmse = curve.nmse_db;
      std::fill(divergence.begin(), divergence.end(), curve.divergence_fraction());
    } else {
      const auto preset = config.preset_params.find(algorithm);
      if (preset != config.preset_params.end()) {
        const NmseCurve curve =
            evaluate_nmse(systems.physical, make_runner(algorithm, system, config, &preset->second, T), config.prior,
                          T, config.trials, config.seeds.eval, config.threads);
        nmse = curve.nmse_db;
        std::fill(divergence.begin(), divergence.end(), curve.divergence_fraction());
      } else {
        TrainConfig train = config.train;
        train.max_generation = T;
        train.seed = config.seeds.train;
        train.epsilon = config.epsilon;
        train.variant = algorithm == Algorithm::TistaMr ? TistaVariant::MeanRemoved : TistaVariant::Standard;
        TrainResult trained = incremental_train(system, config.prior, train);

        if (config.tista_per_generation) {
          nmse[0] = 0.0;
          divergence[0] = 0.0;
          for (std::size_t t = 1; t <= T; ++t) {
            const TistaParams& snapshot = trained.generations[t - 1].params;
            const NmseCurve curve =
                evaluate_nmse(systems.physical, make_runner(algorithm, system, config, &snapshot, t), config.prior, t,
                              config.trials, config.seeds.eval, config.threads);
            nmse[t] = curve.nmse_db[t];
            divergence[t] = curve.divergence_fraction();
            if (t == 1) nmse[0] = curve.nmse_db[0];
          }
        } else {
          const NmseCurve curve =
              evaluate_nmse(systems.physical, make_runner(algorithm, system, config, &trained.params, T),
                            config.prior, T, config.trials, config.seeds.eval, config.threads);
          nmse = curve.nmse_db;
          std::fill(divergence.begin(), divergence.end(), curve.divergence_fraction());
        }
        result.trained.emplace(algorithm, std::move(trained));
      }
    }

    const double elapsed =
        config.record_timing
            ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count()
            : 0.0;
    for (std::size_t t = 0; t <= T; ++t) {
      result.table.push_back(ResultRow{name, t, nmse[t], divergence[t], elapsed});
    }
  }
  return result;
}

namespace {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

constexpr std::string_view kCsvHeader = "algorithm,iteration,nmse_db,divergence_fraction,wallclock_ms";

void write_row(std::ostream& out, const ResultRow& row) {
  out << row.algorithm << ',' << row.iteration << ',' << format_number(row.nmse_db) << ','
      << format_number(row.divergence_fraction) << ',' << format_number(row.wallclock_ms) << '\n';
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(line);
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_number(const std::string& text, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    throw ParseError("csv: bad number '" + text + "' on line " + std::to_string(line_no), line_no);
  }
  return v;
}

}  // namespace

void write_csv(std::ostream& out, const ResultTable& table) {
  out << kCsvHeader << '\n';
  for (const auto& row : table) write_row(out, row);
}

void emit_csv(const ResultTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_csv(out, table);
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

ResultTable parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw ParseError("csv: missing or unexpected header", 0);
  ResultTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 5) throw ParseError("csv: expected 5 columns on line " + std::to_string(line_no), line_no);
    ResultRow row;
    row.algorithm = cells[0];
    row.iteration = static_cast<std::size_t>(parse_number(cells[1], line_no));
    row.nmse_db = parse_number(cells[2], line_no);
    row.divergence_fraction = parse_number(cells[3], line_no);
    row.wallclock_ms = parse_number(cells[4], line_no);
    table.push_back(std::move(row));
  }
  return table;
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& config) {
  config.validate();
  if (!config.sweep) throw ConfigError("sweep", "no sweep configured");
  std::vector<SweepPoint> points;
  for (const double value : config.sweep->values) {
    ExperimentConfig point = config;
    point.sweep.reset();
    if (config.sweep->parameter == "snr_db") {
      point.snr_db = value;
    } else {
      point.ensemble.kind = EnsembleKind::ConditionedSvd;
      point.ensemble.kappa = value;
    }
    points.push_back(SweepPoint{value, run_experiment(point).table});
  }
  return points;
}

void write_sweep_csv(std::ostream& out, const std::string& parameter, const std::vector<SweepPoint>& points) {
  out << "sweep_parameter,sweep_value," << kCsvHeader << '\n';
  for (const auto& point : points) {
    for (const auto& row : point.table) {
      out << parameter << ',' << format_number(point.value) << ',';
      write_row(out, row);
    }
  }
}

}  // namespace tista
