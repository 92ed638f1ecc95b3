#include "tista/sensing.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "tista/errors.hpp"

namespace tista {

namespace {

Eigen::MatrixXd gaussian_matrix(Eigen::Index m, Eigen::Index n, double mean, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(mean, stddev);
  Eigen::MatrixXd out(m, n);
  // Row-major fill order so a seed maps to the same matrix regardless of storage.
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = dist(rng);
  }
  return out;
}

void check_rank(const Eigen::VectorXd& s) {
  const double largest = s.size() > 0 ? s.maxCoeff() : 0.0;
  const double smallest = s.size() > 0 ? s.minCoeff() : 0.0;
  if (!(largest > 0.0) || !(smallest > kRankTolerance * largest)) {
    std::ostringstream msg;
    msg << "sensing matrix is rank deficient: smallest singular value " << smallest
        << " vs largest " << largest;
    throw RankError(msg.str(), smallest);
  }
}

}  // namespace

EnsembleSpec EnsembleSpec::gaussian(Eigen::Index m, Eigen::Index n, double mean, double variance) {
  EnsembleSpec spec;
  spec.kind = EnsembleKind::GaussianIid;
  spec.m = m;
  spec.n = n;
  spec.mean = mean;
  spec.variance = variance;
  spec.validate();
  return spec;
}

EnsembleSpec EnsembleSpec::binary(Eigen::Index m, Eigen::Index n) {
  EnsembleSpec spec;
  spec.kind = EnsembleKind::BinaryPm1;
  spec.m = m;
  spec.n = n;
  spec.validate();
  return spec;
}

EnsembleSpec EnsembleSpec::conditioned(Eigen::Index m, Eigen::Index n, double kappa) {
  EnsembleSpec spec;
  spec.kind = EnsembleKind::ConditionedSvd;
  spec.m = m;
  spec.n = n;
  spec.kappa = kappa;
  spec.validate();
  return spec;
}

void EnsembleSpec::validate() const {
  if (m < 1 || n < 1) throw ParameterError("ensemble: dimensions must be positive");
  if (m >= n) throw ParameterError("ensemble: requires m < n");
  if (kind == EnsembleKind::GaussianIid && !(variance > 0.0)) {
    throw ParameterError("ensemble: Gaussian variance must be positive");
  }
  if (kind == EnsembleKind::ConditionedSvd && !(kappa >= 1.0)) {
    throw ParameterError("ensemble: condition number must be >= 1");
  }
}

Eigen::MatrixXd generate_matrix(const EnsembleSpec& spec, Rng& rng) {
  spec.validate();
  switch (spec.kind) {
    case EnsembleKind::GaussianIid:
      return gaussian_matrix(spec.m, spec.n, spec.mean, std::sqrt(spec.variance), rng);
    case EnsembleKind::BinaryPm1: {
      std::bernoulli_distribution coin(0.5);
      Eigen::MatrixXd out(spec.m, spec.n);
      for (Eigen::Index i = 0; i < spec.m; ++i) {
        for (Eigen::Index j = 0; j < spec.n; ++j) out(i, j) = coin(rng) ? 1.0 : -1.0;
      }
      return out;
    }
    case EnsembleKind::ConditionedSvd:
      return generate_conditioned(spec.kappa, spec.m, spec.n, rng);
  }
  throw ParameterError("ensemble: unknown kind");
}

Eigen::MatrixXd generate_conditioned(double kappa, Eigen::Index m, Eigen::Index n, Rng& rng) {
  if (!(kappa >= 1.0)) throw ParameterError("generate_conditioned: kappa must be >= 1");
  if (m < 1 || m >= n) throw ParameterError("generate_conditioned: requires 1 <= m < n");

  const Eigen::MatrixXd g = gaussian_matrix(m, n, 0.0, 1.0, rng);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);

  const double ratio = (m == 1 || kappa == 1.0) ? 1.0 : std::pow(kappa, -1.0 / static_cast<double>(m - 1));
  Eigen::VectorXd s(m);
  double energy = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    s[i] = std::pow(ratio, static_cast<double>(i));
    energy += s[i] * s[i];
  }
  s *= std::sqrt(static_cast<double>(n) / energy);
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

SensingSystem SensingSystem::with_noise_var(double noise_var) const {
  if (!(noise_var >= 0.0) || !std::isfinite(noise_var)) {
    throw ParameterError("noise variance must be finite and >= 0");
  }
  SensingSystem copy = *this;
  copy.noise_var_ = noise_var;
  return copy;
}

SensingSystem build_front_end(Eigen::MatrixXd A, FrontEnd front_end) {
  if (A.rows() < 1 || A.rows() > A.cols()) {
    throw ShapeError("build_front_end: expected a wide matrix (m <= n)");
  }
  if (front_end.kind == FrontEndKind::RegularizedInverse && !(front_end.beta > 0.0)) {
    throw ParameterError("build_front_end: regularization beta must be positive");
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  check_rank(s);

  SensingSystem sys;
  sys.front_end_ = front_end;
  sys.singular_values_ = s;
  switch (front_end.kind) {
    case FrontEndKind::PseudoInverse:
      sys.w_ = svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
      break;
    case FrontEndKind::RegularizedInverse: {
      const Eigen::VectorXd gain = s.array() / (s.array().square() + front_end.beta);
      sys.w_ = svd.matrixV() * gain.asDiagonal() * svd.matrixU().transpose();
      break;
    }
    case FrontEndKind::Transpose:
      sys.w_ = A.transpose();
      break;
  }

  sys.tr_ata_ = A.squaredNorm();
  sys.tr_wwt_ = sys.w_.squaredNorm();
  sys.tr_z_ = (sys.w_.array() * A.transpose().array()).sum();
  // tr(W A A^T W^T) = <W^T W, A A^T>_F, both m x m.
  const Eigen::MatrixXd wtw = sys.w_.transpose() * sys.w_;
  const Eigen::MatrixXd aat = A * A.transpose();
  sys.tr_zzt_ = (wtw.array() * aat.array()).sum();
  sys.a_ = std::move(A);
  return sys;
}

SensingSystem mean_removed_system(const Eigen::MatrixXd& A, std::optional<double> mu) {
  const double offset = mu.value_or(A.mean());
  if (!std::isfinite(offset)) throw ParameterError("mean_removed_system: non-finite mean");
  Eigen::MatrixXd centered = A.array() - offset;
  SensingSystem sys = build_front_end(std::move(centered), FrontEnd::pseudo_inverse());
  sys.offset_ = offset;
  return sys;
}

Eigen::MatrixXd pseudo_inverse_cholesky(const Eigen::MatrixXd& A) {
  Eigen::LLT<Eigen::MatrixXd> llt(A * A.transpose());
  if (llt.info() != Eigen::Success) {
    throw RankError("pseudo_inverse_cholesky: A A^T is not positive definite", 0.0);
  }
  return llt.solve(A).transpose();
}

Eigen::VectorXd observe(const SensingSystem& system, const Eigen::VectorXd& x, Rng& rng) {
  if (x.size() != system.n()) {
    throw ShapeError("observe: signal length " + std::to_string(x.size()) + " does not match n = " +
                     std::to_string(system.n()));
  }
  Eigen::VectorXd y = system.A() * x;
  if (system.offset() != 0.0) y.array() += system.offset() * x.sum();
  if (system.noise_var() > 0.0) {
    std::normal_distribution<double> noise(0.0, std::sqrt(system.noise_var()));
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += noise(rng);
  }
  return y;
}

Eigen::MatrixXd observe_batch(const SensingSystem& system, const Eigen::MatrixXd& x, Rng& rng) {
  if (x.rows() != system.n()) throw ShapeError("observe_batch: signal length mismatch");
  Eigen::MatrixXd y = system.A() * x;
  if (system.offset() != 0.0) {
    y.rowwise() += system.offset() * x.colwise().sum();
  }
  if (system.noise_var() > 0.0) {
    std::normal_distribution<double> noise(0.0, std::sqrt(system.noise_var()));
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      for (Eigen::Index i = 0; i < y.rows(); ++i) y(i, j) += noise(rng);
    }
  }
  return y;
}

namespace {

constexpr char kMagic[4] = {'S', 'M', 'T', 'X'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes[at + k]) << (8 * k);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_matrix(const Eigen::MatrixXd& matrix) {
  std::vector<std::uint8_t> out;
  out.reserve(12 + 8 * static_cast<std::size_t>(matrix.size()));
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(matrix.rows()));
  put_u32(out, static_cast<std::uint32_t>(matrix.cols()));
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
      const auto bits = std::bit_cast<std::uint64_t>(matrix(i, j));
      for (int k = 0; k < 8; ++k) out.push_back(static_cast<std::uint8_t>(bits >> (8 * k)));
    }
  }
  return out;
}

Eigen::MatrixXd decode_matrix(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw ParseError("matrix file: truncated header", bytes.size());
  for (std::size_t k = 0; k < 4; ++k) {
    if (bytes[k] != static_cast<std::uint8_t>(kMagic[k])) throw ParseError("matrix file: bad magic", k);
  }
  const std::uint32_t rows = get_u32(bytes, 4);
  const std::uint32_t cols = get_u32(bytes, 8);
  const std::size_t need = 12 + 8 * static_cast<std::size_t>(rows) * cols;
  if (bytes.size() != need) {
    throw ParseError("matrix file: payload size mismatch, expected " + std::to_string(need) + " bytes",
                     std::min(bytes.size(), need));
  }
  Eigen::MatrixXd out(rows, cols);
  std::size_t at = 12;
  for (std::uint32_t i = 0; i < rows; ++i) {
    for (std::uint32_t j = 0; j < cols; ++j) {
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[at + k]) << (8 * k);
      out(i, j) = std::bit_cast<double>(bits);
      at += 8;
    }
  }
  return out;
}

void save_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& matrix) {
  const auto bytes = encode_matrix(matrix);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Eigen::MatrixXd load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_matrix(bytes);
}

}  // namespace tista
