#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "tista/recovery.hpp"
#include "tista/sensing.hpp"
#include "tista/signal_model.hpp"

namespace tista {

enum class TistaVariant { Standard, MeanRemoved };

// Column j of x is a signal, column j of y its observation.
struct Batch {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;

  Eigen::Index size() const { return x.cols(); }
};

Batch sample_batch(const SensingSystem& system, const SparseSignalPrior& prior, Eigen::Index size, Rng& rng);

struct LossAndGradient {
  double loss = 0.0;
  // d loss / d gamma_0 .. gamma_{t-1}, then d/d alpha2 and d/d p when the
  // params carry trained shrinkage.
  std::vector<double> grads;
};

// Batch mean of ||s_t - x||^2 after `generation` rounds of the unrolled
// recursion, with exact reverse-mode derivatives through the linear step,
// both variance estimators and the MMSE shrinkage. The epsilon clamp of the
// v2 estimator has zero derivative on its clamped branch.
LossAndGradient loss_and_gradient(const SensingSystem& system, const Batch& batch, const TistaParams& params,
                                  std::size_t generation, const SparseSignalPrior& prior,
                                  TistaVariant variant = TistaVariant::Standard,
                                  double epsilon = kDefaultEpsilon);

// Forward pass only: s_t for every column of the batch.
Eigen::MatrixXd unrolled_forward(const SensingSystem& system, const Eigen::MatrixXd& y, const TistaParams& params,
                                 std::size_t generation, const SparseSignalPrior& prior,
                                 TistaVariant variant = TistaVariant::Standard,
                                 double epsilon = kDefaultEpsilon);

double batch_loss(const SensingSystem& system, const Batch& batch, const TistaParams& params,
                  std::size_t generation, const SparseSignalPrior& prior,
                  TistaVariant variant = TistaVariant::Standard, double epsilon = kDefaultEpsilon);

}  // namespace tista
