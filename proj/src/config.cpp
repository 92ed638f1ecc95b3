#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "tista/errors.hpp"
#include "tista/harness.hpp"

namespace tista {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

double to_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(key, "expected a number, got '" + value + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(key, "expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key, "expected true/false, got '" + value + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::string variance_text;  // resolved after m is known
  std::set<std::string> seen;

  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(key, "given twice");

    if (key == "ensemble") {
      if (value == "gaussian") {
        config.ensemble.kind = EnsembleKind::GaussianIid;
      } else if (value == "binary") {
        config.ensemble.kind = EnsembleKind::BinaryPm1;
      } else if (value == "conditioned") {
        config.ensemble.kind = EnsembleKind::ConditionedSvd;
      } else {
        throw ConfigError(key, "expected gaussian, binary or conditioned");
      }
    } else if (key == "m") {
      config.ensemble.m = static_cast<Eigen::Index>(to_u64(key, value));
    } else if (key == "n") {
      config.ensemble.n = static_cast<Eigen::Index>(to_u64(key, value));
    } else if (key == "matrix_mean") {
      config.ensemble.mean = to_double(key, value);
    } else if (key == "matrix_variance") {
      variance_text = value;
    } else if (key == "kappa") {
      config.ensemble.kappa = to_double(key, value);
    } else if (key == "p") {
      config.prior.p = to_double(key, value);
    } else if (key == "alpha2") {
      config.prior.alpha2 = to_double(key, value);
    } else if (key == "snr_db") {
      if (value == "noiseless") {
        config.snr_db.reset();
      } else {
        config.snr_db = to_double(key, value);
      }
    } else if (key == "iterations") {
      config.iterations = to_u64(key, value);
    } else if (key == "algorithms") {
      config.algorithms = parse_algorithm_list(value);
    } else if (key == "trials") {
      config.trials = to_u64(key, value);
    } else if (key == "minibatch_size") {
      config.train.minibatch_size = static_cast<Eigen::Index>(to_u64(key, value));
    } else if (key == "batches_per_generation") {
      config.train.batches_per_generation = to_u64(key, value);
    } else if (key == "lr_early") {
      config.train.lr.early = to_double(key, value);
    } else if (key == "lr_switch_generation") {
      config.train.lr.switch_generation = to_u64(key, value);
    } else if (key == "lr_late") {
      config.train.lr.late = to_double(key, value);
    } else if (key == "train_alpha_p") {
      config.train.train_alpha_p = to_bool(key, value);
    } else if (key == "shrinkage_coordinates") {
      if (value == "direct") {
        config.train.shrinkage_coordinates = ShrinkageCoordinates::Direct;
      } else if (value == "log_logit") {
        config.train.shrinkage_coordinates = ShrinkageCoordinates::LogLogit;
      } else {
        throw ConfigError(key, "expected direct or log_logit");
      }
    } else if (key == "gamma_init") {
      config.train.gamma_init = to_double(key, value);
    } else if (key == "beta_reg") {
      config.beta_reg = to_double(key, value);
    } else if (key == "amp_theta") {
      config.amp_theta = to_double(key, value);
    } else if (key == "ista_step") {
      if (value == "auto") {
        config.ista_step.reset();
      } else {
        config.ista_step = to_double(key, value);
      }
    } else if (key == "ista_lambda") {
      config.ista_lambda = to_double(key, value);
    } else if (key == "mean_offset") {
      if (value == "auto") {
        config.mean_offset.reset();
      } else {
        config.mean_offset = to_double(key, value);
      }
    } else if (key == "epsilon") {
      config.epsilon = to_double(key, value);
    } else if (key == "matrix_seed") {
      config.seeds.matrix = to_u64(key, value);
    } else if (key == "train_seed") {
      config.seeds.train = to_u64(key, value);
    } else if (key == "eval_seed") {
      config.seeds.eval = to_u64(key, value);
    } else if (key == "threads") {
      config.threads = static_cast<unsigned>(to_u64(key, value));
    } else if (key == "record_timing") {
      config.record_timing = to_bool(key, value);
    } else if (key == "tista_curve") {
      if (value == "per_generation") {
        config.tista_per_generation = true;
      } else if (value == "final") {
        config.tista_per_generation = false;
      } else {
        throw ConfigError(key, "expected per_generation or final");
      }
    } else if (key == "sweep") {
      const auto colon = value.find(':');
      if (colon == std::string::npos) throw ConfigError(key, "expected '<parameter>: v1, v2, ...'");
      config.sweep = Sweep{trim(std::string_view(value).substr(0, colon)),
                           to_list(key, trim(std::string_view(value).substr(colon + 1)))};
    } else {
      throw ConfigError(key, "unknown key");
    }
  }

  if (variance_text.empty() || variance_text == "1/m") {
    config.ensemble.variance = 1.0 / static_cast<double>(config.ensemble.m);
  } else {
    config.ensemble.variance = to_double("matrix_variance", variance_text);
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

}  // namespace tista
