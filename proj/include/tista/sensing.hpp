#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tista/random.hpp"

namespace tista {

enum class EnsembleKind { GaussianIid, BinaryPm1, ConditionedSvd };

struct EnsembleSpec {
  EnsembleKind kind = EnsembleKind::GaussianIid;
  Eigen::Index m = 250;
  Eigen::Index n = 500;
  double mean = 0.0;      // GaussianIid
  double variance = 1.0;  // GaussianIid
  double kappa = 1.0;     // ConditionedSvd

  static EnsembleSpec gaussian(Eigen::Index m, Eigen::Index n, double mean, double variance);
  static EnsembleSpec binary(Eigen::Index m, Eigen::Index n);
  static EnsembleSpec conditioned(Eigen::Index m, Eigen::Index n, double kappa);

  void validate() const;
};

Eigen::MatrixXd generate_matrix(const EnsembleSpec& spec, Rng& rng);

// Rotates the singular vectors of an i.i.d. N(0,1) draw onto a geometric
// singular-value profile with s_1/s_m = kappa and sum s_i^2 = n.
Eigen::MatrixXd generate_conditioned(double kappa, Eigen::Index m, Eigen::Index n, Rng& rng);

enum class FrontEndKind { PseudoInverse, RegularizedInverse, Transpose };

struct FrontEnd {
  FrontEndKind kind = FrontEndKind::PseudoInverse;
  double beta = 0.0;  // RegularizedInverse only

  static FrontEnd pseudo_inverse() { return {FrontEndKind::PseudoInverse, 0.0}; }
  static FrontEnd regularized(double beta) { return {FrontEndKind::RegularizedInverse, beta}; }
  static FrontEnd transpose() { return {FrontEndKind::Transpose, 0.0}; }
};

// Smallest singular value must exceed this fraction of the largest.
inline constexpr double kRankTolerance = 1e-10;

// A sensing matrix together with its precomputed linear front end W and the
// trace constants used by the error-variance estimators. Immutable once
// built; with_noise_var() returns a modified copy.
class SensingSystem {
 public:
  const Eigen::MatrixXd& A() const { return a_; }
  const Eigen::MatrixXd& W() const { return w_; }
  const FrontEnd& front_end() const { return front_end_; }
  const Eigen::VectorXd& singular_values() const { return singular_values_; }

  Eigen::Index m() const { return a_.rows(); }
  Eigen::Index n() const { return a_.cols(); }

  double tr_AtA() const { return tr_ata_; }
  double tr_WWt() const { return tr_wwt_; }
  // Z = W A
  double tr_Z() const { return tr_z_; }
  double tr_ZZt() const { return tr_zzt_; }
  // B = I - W A
  double tr_BBt() const { return static_cast<double>(n()) - 2.0 * tr_z_ + tr_zzt_; }

  double noise_var() const { return noise_var_; }
  SensingSystem with_noise_var(double noise_var) const;

  // Entrywise mean subtracted from the physical matrix (0 when none). The
  // physical matrix is A() + offset() * ones.
  double offset() const { return offset_; }
  bool mean_removed() const { return offset_ != 0.0; }

  friend SensingSystem build_front_end(Eigen::MatrixXd A, FrontEnd front_end);
  friend SensingSystem mean_removed_system(const Eigen::MatrixXd& A, std::optional<double> mu);

 private:
  SensingSystem() = default;

  Eigen::MatrixXd a_;
  Eigen::MatrixXd w_;
  FrontEnd front_end_;
  Eigen::VectorXd singular_values_;
  double tr_ata_ = 0.0;
  double tr_wwt_ = 0.0;
  double tr_z_ = 0.0;
  double tr_zzt_ = 0.0;
  double noise_var_ = 0.0;
  double offset_ = 0.0;
};

SensingSystem build_front_end(Eigen::MatrixXd A, FrontEnd front_end);

// System over A' = A - mu; mu defaults to the empirical entry mean of A.
SensingSystem mean_removed_system(const Eigen::MatrixXd& A, std::optional<double> mu = std::nullopt);

// A^T (A A^T)^{-1} through a Cholesky factorization of A A^T. Only suitable
// for well-conditioned A; build_front_end uses the SVD route.
Eigen::MatrixXd pseudo_inverse_cholesky(const Eigen::MatrixXd& A);

// y = A_phys x + w with w ~ N(0, noise_var I).
Eigen::VectorXd observe(const SensingSystem& system, const Eigen::VectorXd& x, Rng& rng);

// Column-wise observe() for a batch of signals.
Eigen::MatrixXd observe_batch(const SensingSystem& system, const Eigen::MatrixXd& x, Rng& rng);

// Flat binary matrix container: "SMTX", u32 rows, u32 cols (little-endian),
// then rows*cols row-major float64 values.
std::vector<std::uint8_t> encode_matrix(const Eigen::MatrixXd& matrix);
Eigen::MatrixXd decode_matrix(std::span<const std::uint8_t> bytes);
void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& matrix);
Eigen::MatrixXd load_matrix(const std::filesystem::path& path);

}  // namespace tista
