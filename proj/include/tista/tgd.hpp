#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tista::tgd {

// Gradient descent with per-step trainable step sizes on
// f(x1, x2) = x1^2 + 10 x2^2, minimizer (0, 0).
inline constexpr std::array<double, 2> kCurvature = {2.0, 20.0};  // grad f = curvature .* s

using Point = std::array<double, 2>;

struct TgdConfig {
  std::size_t iterations = 20;
  std::size_t minibatch_size = 50;
  std::size_t batches_per_generation = 500;
  double lr = 1e-3;
  double gamma_init = 0.0;
  double box = 10.0;  // starts uniform on [-box, box]^2
  std::uint64_t seed = 0;
};

// Applies s <- s - gamma_t grad f(s) for every step size in order.
Point descend(Point start, std::span<const double> gammas);

// Incrementally trained step sizes gamma_1..gamma_T minimizing E||s_{t+1}||^2.
std::vector<double> tgd_train(const TgdConfig& config);

// Mean of ||s_t - s*||^2 over `trials` random starts, t = 0..len(gammas).
std::vector<double> mean_squared_error_curve(std::span<const double> gammas, std::size_t trials, double box,
                                             std::uint64_t seed);

std::vector<Point> trajectory(Point start, std::span<const double> gammas);

}  // namespace tista::tgd
