#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tista/recovery.hpp"

namespace tista::mnist {

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr Eigen::Index kSide = 28;
inline constexpr Eigen::Index kPixels = kSide * kSide;

// Images rasterized row-major into 784-vectors with pixel values b / 255.
struct ImageDataset {
  std::vector<Eigen::VectorXd> images;

  std::size_t count() const { return images.size(); }
};

// IDX3 unsigned-byte image file: big-endian magic 0x00000803, count, rows,
// cols, then count * rows * cols bytes. Only 28 x 28 images are accepted.
ImageDataset parse_idx(std::span<const std::uint8_t> bytes);
ImageDataset load_idx(const std::filesystem::path& path);

struct MnistConfig {
  Eigen::Index m = 392;
  double noise_var = 4e-4;
  std::size_t generations = 8;      // trained TISTA depth
  Eigen::Index minibatch_size = 200;
  double lr = 0.005;
  std::size_t epochs_per_generation = 1;
  std::size_t oamp_iterations = 100;
  ShrinkageParams tista_init{1.0, 0.5};  // starting (alpha2, p) for TISTA
  ShrinkageParams oamp_prior{1.0, 0.5};
  std::size_t test_images = 1000;  // 0 = all
  std::uint64_t seed = 7;
};

struct MseRow {
  std::string algorithm;
  std::size_t iteration = 0;
  double mse = 0.0;
};

struct MnistResult {
  std::vector<MseRow> table;  // mean per-pixel MSE over the test images
  TistaParams trained;
  std::vector<Eigen::VectorXd> tista_reconstructions;  // s_T per test image
  std::vector<Eigen::VectorXd> oamp_reconstructions;
  double tista_mse = 0.0;  // at t = generations
  double oamp_mse = 0.0;   // at t = oamp_iterations
};

MnistResult run_mnist_experiment(const ImageDataset& train, const ImageDataset& test, const MnistConfig& config);

void write_mse_csv(const std::filesystem::path& path, const std::vector<MseRow>& table);

// Binary PGM (P5); values are clamped to [0, 1] for export only.
void write_pgm(const std::filesystem::path& path, const Eigen::VectorXd& image, Eigen::Index rows = kSide,
               Eigen::Index cols = kSide);

}  // namespace tista::mnist
