#include "tista/mnist.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>

#include "tista/errors.hpp"
#include "tista/train.hpp"

namespace tista::mnist {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t at) {
  if (at + 4 > bytes.size()) throw ParseError("idx: truncated header", bytes.size());
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

double per_pixel_mse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  return (estimate - truth).squaredNorm() / static_cast<double>(truth.size());
}

}  // namespace

ImageDataset parse_idx(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kImageMagic) throw ParseError("idx: bad magic number", 0);
  const std::uint32_t count = read_be32(bytes, 4);
  const std::uint32_t rows = read_be32(bytes, 8);
  const std::uint32_t cols = read_be32(bytes, 12);
  if (rows != kSide) throw ParseError("idx: expected 28 rows, got " + std::to_string(rows), 8);
  if (cols != kSide) throw ParseError("idx: expected 28 columns, got " + std::to_string(cols), 12);

  const std::size_t need = 16 + static_cast<std::size_t>(count) * kPixels;
  if (bytes.size() < need) throw ParseError("idx: truncated pixel data", bytes.size());
  if (bytes.size() > need) throw ParseError("idx: trailing bytes after pixel data", need);

  ImageDataset data;
  data.images.reserve(count);
  std::size_t at = 16;
  for (std::uint32_t k = 0; k < count; ++k) {
    Eigen::VectorXd image(kPixels);
    for (Eigen::Index i = 0; i < kPixels; ++i) image[i] = static_cast<double>(bytes[at++]) / 255.0;
    data.images.push_back(std::move(image));
  }
  return data;
}

ImageDataset load_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_idx(bytes);
}

MnistResult run_mnist_experiment(const ImageDataset& train, const ImageDataset& test, const MnistConfig& config) {
  if (train.count() == 0 || test.count() == 0) throw ConfigError("dataset", "training and test sets must be nonempty");
  if (config.minibatch_size < 1) throw ConfigError("minibatch_size", "must be >= 1");

  Rng rng(config.seed);
  const EnsembleSpec spec = EnsembleSpec::gaussian(config.m, kPixels, 0.0, 1.0 / static_cast<double>(config.m));
  const SensingSystem system =
      build_front_end(generate_matrix(spec, rng), FrontEnd::pseudo_inverse()).with_noise_var(config.noise_var);

  // The prior only fixes the shrinkage starting point; TISTA trains (alpha2, p).
  const SparseSignalPrior prior = SparseSignalPrior::bernoulli_gaussian(config.tista_init.p, config.tista_init.alpha2);

  const std::size_t batch = static_cast<std::size_t>(config.minibatch_size);
  const std::size_t per_epoch = std::max<std::size_t>(1, train.count() / batch);
  TrainConfig train_config;
  train_config.minibatch_size = config.minibatch_size;
  train_config.batches_per_generation = per_epoch * config.epochs_per_generation;
  train_config.max_generation = config.generations;
  train_config.lr = LearningRateSchedule{config.lr, config.generations, config.lr};
  train_config.train_alpha_p = true;
  train_config.shrinkage_init = config.tista_init;
  train_config.seed = config.seed;

  // One pass over a per-generation shuffle of the training set; noise is fresh per batch.
  std::vector<std::size_t> order(train.count());
  std::size_t order_generation = 0;
  const BatchSource source = [&](std::size_t generation, std::size_t index) {
    const std::size_t epoch_slot = index % per_epoch;
    if (order_generation != generation * 1000003 + index / per_epoch) {
      order_generation = generation * 1000003 + index / per_epoch;
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng shuffle_rng(derive_seed(config.seed, 0xfeed, order_generation));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
    }
    Batch b;
    b.x.resize(kPixels, static_cast<Eigen::Index>(batch));
    for (std::size_t j = 0; j < batch; ++j) {
      b.x.col(static_cast<Eigen::Index>(j)) = train.images[order[(epoch_slot * batch + j) % order.size()]];
    }
    Rng noise_rng(derive_seed(config.seed, generation, index));
    b.y = observe_batch(system, b.x, noise_rng);
    return b;
  };

  MnistResult result;
  result.trained = train_unrolled(system, prior, train_config, source).params;

  const std::size_t n_test = config.test_images == 0 ? test.count() : std::min(config.test_images, test.count());
  const SparseSignalPrior oamp_prior =
      SparseSignalPrior::bernoulli_gaussian(config.oamp_prior.p, config.oamp_prior.alpha2);
  std::vector<double> tista_sum(config.generations + 1, 0.0);
  std::vector<double> oamp_sum(config.oamp_iterations + 1, 0.0);
  std::size_t oamp_ok = 0;
  for (std::size_t k = 0; k < n_test; ++k) {
    const Eigen::VectorXd& x = test.images[k];
    Rng obs_rng(derive_seed(config.seed, 0xe7a1, k));
    const Eigen::VectorXd y = observe(system, x, obs_rng);

    const RecoveryTrace tista_trace = run_tista(system, y, result.trained, prior);
    for (std::size_t t = 0; t <= config.generations; ++t) tista_sum[t] += per_pixel_mse(tista_trace.iterations[t].s, x);
    result.tista_reconstructions.push_back(tista_trace.estimate());

    try {
      const RecoveryTrace oamp_trace = run_oamp(system, y, config.oamp_iterations, oamp_prior);
      for (std::size_t t = 0; t <= config.oamp_iterations; ++t) {
        oamp_sum[t] += per_pixel_mse(oamp_trace.iterations[t].s, x);
      }
      result.oamp_reconstructions.push_back(oamp_trace.estimate());
      ++oamp_ok;
    } catch (const DivergenceError&) {
      result.oamp_reconstructions.push_back(Eigen::VectorXd::Constant(kPixels, std::nan("")));
    }
  }

  for (std::size_t t = 0; t <= config.generations; ++t) {
    result.table.push_back(MseRow{"tista", t, tista_sum[t] / static_cast<double>(n_test)});
  }
  for (std::size_t t = 0; t <= config.oamp_iterations; ++t) {
    const double mse = oamp_ok == 0 ? std::nan("") : oamp_sum[t] / static_cast<double>(oamp_ok);
    result.table.push_back(MseRow{"oamp", t, mse});
  }
  result.tista_mse = tista_sum[config.generations] / static_cast<double>(n_test);
  result.oamp_mse = oamp_ok == 0 ? std::nan("") : oamp_sum[config.oamp_iterations] / static_cast<double>(oamp_ok);
  return result;
}

void write_mse_csv(const std::filesystem::path& path, const std::vector<MseRow>& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "algorithm,iteration,mse\n";
  char buf[32];
  for (const auto& row : table) {
    std::snprintf(buf, sizeof buf, "%.6g", row.mse);
    out << row.algorithm << ',' << row.iteration << ',' << buf << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_pgm(const std::filesystem::path& path, const Eigen::VectorXd& image, Eigen::Index rows,
               Eigen::Index cols) {
  if (image.size() != rows * cols) throw ShapeError("write_pgm: image size does not match rows * cols");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P5\n" << cols << ' ' << rows << "\n255\n";
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    const double v = std::isfinite(image[i]) ? std::clamp(image[i], 0.0, 1.0) : 0.0;
    out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0))));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace tista::mnist
