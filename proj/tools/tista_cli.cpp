#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tista/errors.hpp"
#include "tista/harness.hpp"
#include "tista/mnist.hpp"
#include "tista/tgd.hpp"
#include "tista/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string algorithms;
  std::vector<std::string> params;  // "algorithm=path"
  bool timing = false;
};

tista::ExperimentConfig load_experiment(const CommonOptions& opts) {
  tista::ExperimentConfig config = opts.config_path.empty() ? tista::ExperimentConfig{}
                                                            : tista::load_config(opts.config_path);
  if (opts.seed) {
    config.seeds.matrix = tista::derive_seed(*opts.seed, 1);
    config.seeds.train = tista::derive_seed(*opts.seed, 2);
    config.seeds.eval = tista::derive_seed(*opts.seed, 3);
  }
  if (!opts.algorithms.empty()) config.algorithms = tista::parse_algorithm_list(opts.algorithms);
  if (opts.timing) config.record_timing = true;
  for (const auto& spec : opts.params) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw tista::ConfigError("params", "expected algorithm=path, got '" + spec + "'");
    config.preset_params[tista::parse_algorithm(spec.substr(0, eq))] = tista::load_params(spec.substr(eq + 1));
  }
  config.validate();
  return config;
}

bool divergence_dominated(const tista::ResultTable& table) {
  for (const auto& row : table) {
    if (row.divergence_fraction > 0.5) return true;
  }
  return false;
}

void add_common(CLI::App* cmd, CommonOptions& opts, bool with_algorithms) {
  cmd->add_option("--config", opts.config_path, "experiment config file (key = value)");
  cmd->add_option("--seed", opts.seed, "base seed; overrides matrix, train and eval seeds");
  cmd->add_option("--out", opts.out, "output path")->required();
  if (with_algorithms) {
    cmd->add_option("--algorithms", opts.algorithms, "comma-separated: ista,amp,oamp,tista,tista_mr,tista_lmmse");
    cmd->add_option("--params", opts.params, "algorithm=path trained-parameter file (skips training)");
    cmd->add_flag("--timing", opts.timing, "record wallclock_ms (output is no longer reproducible)");
  }
}

int cmd_train(const CommonOptions& opts) {
  tista::ExperimentConfig config = load_experiment(opts);
  tista::Algorithm target = tista::Algorithm::Tista;
  for (auto a : config.algorithms) {
    if (tista::is_trainable(a)) {
      target = a;
      break;
    }
  }
  config.algorithms = {target};
  config.trials = 1;
  const tista::ExperimentResult result = tista::run_experiment(config);
  const auto& trained = result.trained.at(target);
  tista::save_params(opts.out, trained.params);
  for (const auto& g : trained.generations) {
    std::fprintf(stderr, "generation %zu loss %.6g\n", g.generation, g.final_loss);
  }
  return kExitOk;
}

int cmd_eval(const CommonOptions& opts) {
  const tista::ExperimentConfig config = load_experiment(opts);
  const tista::ExperimentResult result = tista::run_experiment(config);
  tista::emit_csv(result.table, opts.out);
  return divergence_dominated(result.table) ? kExitDiverged : kExitOk;
}

int cmd_sweep(const CommonOptions& opts) {
  const tista::ExperimentConfig config = load_experiment(opts);
  if (!config.sweep) throw tista::ConfigError("sweep", "sweep subcommand needs a 'sweep = param: v1, v2, ...' line");
  const auto points = tista::run_sweep(config);
  std::ofstream out(opts.out, std::ios::binary);
  if (!out) throw tista::IoError("cannot open " + opts.out + " for writing");
  tista::write_sweep_csv(out, config.sweep->parameter, points);
  bool diverged = false;
  for (const auto& p : points) diverged = diverged || divergence_dominated(p.table);
  return diverged ? kExitDiverged : kExitOk;
}

int cmd_tgd(const CommonOptions& opts, std::size_t trials, std::vector<double> start) {
  tista::tgd::TgdConfig config;
  config.seed = opts.seed.value_or(0);
  if (start.size() != 2) throw tista::ConfigError("start", "expected two coordinates");
  const std::vector<double> trained = tista::tgd::tgd_train(config);
  const std::vector<double> gd_small(config.iterations, 0.01);
  const std::vector<double> gd_large(config.iterations, 0.09);

  std::ofstream out(opts.out, std::ios::binary);
  if (!out) throw tista::IoError("cannot open " + opts.out + " for writing");
  out << "series,t,gamma,log10_mse,x1,x2\n";
  const std::uint64_t eval_seed = tista::derive_seed(config.seed, 0x7e57);
  auto emit = [&](const char* name, const std::vector<double>& gammas) {
    const auto mse = tista::tgd::mean_squared_error_curve(gammas, trials, config.box, eval_seed);
    const auto path = tista::tgd::trajectory({start[0], start[1]}, gammas);
    char buf[160];
    for (std::size_t t = 0; t < path.size(); ++t) {
      const double g = t < gammas.size() ? gammas[t] : 0.0;
      std::snprintf(buf, sizeof buf, "%s,%zu,%.6g,%.6g,%.6g,%.6g\n", name, t, g, std::log10(mse[t]), path[t][0],
                    path[t][1]);
      out << buf;
    }
  };
  emit("tgd", trained);
  emit("gd_0.01", gd_small);
  emit("gd_0.09", gd_large);
  if (!out) throw tista::IoError("write failed: " + opts.out);
  return kExitOk;
}

int cmd_mnist(const std::string& train_path, const std::string& test_path, const std::string& out_path,
              const std::string& pgm_dir, std::size_t test_images, std::optional<std::uint64_t> seed) {
  const auto train = tista::mnist::load_idx(train_path);
  const auto test = tista::mnist::load_idx(test_path);
  tista::mnist::MnistConfig config;
  config.test_images = test_images;
  if (seed) config.seed = *seed;
  const auto result = tista::mnist::run_mnist_experiment(train, test, config);
  tista::mnist::write_mse_csv(out_path, result.table);
  std::fprintf(stderr, "tista mse %.6g  oamp mse %.6g  alpha2 %.4g  p %.4g\n", result.tista_mse, result.oamp_mse,
               result.trained.shrinkage->alpha2, result.trained.shrinkage->p);
  if (!pgm_dir.empty()) {
    std::filesystem::create_directories(pgm_dir);
    const std::size_t n = std::min<std::size_t>(10, result.tista_reconstructions.size());
    for (std::size_t k = 0; k < n; ++k) {
      const std::string stem = std::to_string(k);
      tista::mnist::write_pgm(std::filesystem::path(pgm_dir) / (stem + "_orig.pgm"), test.images[k]);
      tista::mnist::write_pgm(std::filesystem::path(pgm_dir) / (stem + "_tista.pgm"),
                              result.tista_reconstructions[k]);
      tista::mnist::write_pgm(std::filesystem::path(pgm_dir) / (stem + "_oamp.pgm"), result.oamp_reconstructions[k]);
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TISTA sparse recovery experiments"};
  app.require_subcommand(1);

  CommonOptions train_opts, eval_opts, sweep_opts, tgd_opts;
  add_common(app.add_subcommand("train", "train TISTA and write a parameter file"), train_opts, true);
  add_common(app.add_subcommand("eval", "evaluate algorithms and write an NMSE CSV"), eval_opts, true);
  add_common(app.add_subcommand("sweep", "evaluate over an SNR or kappa sweep"), sweep_opts, true);

  auto* tgd_cmd = app.add_subcommand("tgd-demo", "trained gradient descent on x1^2 + 10 x2^2");
  add_common(tgd_cmd, tgd_opts, false);
  std::size_t tgd_trials = 10000;
  std::vector<double> tgd_start = {8.0, 8.0};
  tgd_cmd->add_option("--trials", tgd_trials, "random starts for the error curves");
  tgd_cmd->add_option("--start", tgd_start, "trajectory start x1 x2")->expected(2);

  auto* mnist_cmd = app.add_subcommand("mnist", "TISTA vs OAMP on MNIST images");
  std::string train_images, test_images, mnist_out, pgm_dir;
  std::size_t mnist_tests = 1000;
  std::optional<std::uint64_t> mnist_seed;
  mnist_cmd->add_option("--train-images", train_images, "IDX image file for training")->required();
  mnist_cmd->add_option("--test-images", test_images, "IDX image file for evaluation")->required();
  mnist_cmd->add_option("--out", mnist_out, "MSE CSV path")->required();
  mnist_cmd->add_option("--export-pgm", pgm_dir, "directory for PGM reconstructions");
  mnist_cmd->add_option("--test-count", mnist_tests, "held-out images to evaluate (0 = all)");
  mnist_cmd->add_option("--seed", mnist_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (app.got_subcommand("train")) return cmd_train(train_opts);
    if (app.got_subcommand("eval")) return cmd_eval(eval_opts);
    if (app.got_subcommand("sweep")) return cmd_sweep(sweep_opts);
    if (app.got_subcommand("tgd-demo")) return cmd_tgd(tgd_opts, tgd_trials, tgd_start);
    if (app.got_subcommand("mnist")) {
      return cmd_mnist(train_images, test_images, mnist_out, pgm_dir, mnist_tests, mnist_seed);
    }
  } catch (const tista::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
