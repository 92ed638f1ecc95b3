#include "tista/tgd.hpp"

#include <random>

#include "tista/random.hpp"
#include "tista/train.hpp"

namespace tista::tgd {

Point descend(Point start, std::span<const double> gammas) {
  for (double g : gammas) {
    for (std::size_t i = 0; i < 2; ++i) start[i] -= g * kCurvature[i] * start[i];
  }
  return start;
}

std::vector<Point> trajectory(Point start, std::span<const double> gammas) {
  std::vector<Point> path{start};
  for (double g : gammas) {
    for (std::size_t i = 0; i < 2; ++i) start[i] -= g * kCurvature[i] * start[i];
    path.push_back(start);
  }
  return path;
}

namespace {

Point random_start(Rng& rng, double box) {
  std::uniform_real_distribution<double> u(-box, box);
  const double a = u(rng);
  return {a, u(rng)};
}

// Mean ||s_t||^2 over the batch and its gradient in the step sizes.
double loss_and_gradient(const std::vector<Point>& starts, std::span<const double> gammas,
                         std::vector<double>& grads) {
  const std::size_t depth = gammas.size();
  const double count = static_cast<double>(starts.size());
  grads.assign(depth, 0.0);
  double loss = 0.0;
  std::vector<Point> path(depth + 1);
  for (const Point& start : starts) {
    path[0] = start;
    for (std::size_t t = 0; t < depth; ++t) {
      for (std::size_t i = 0; i < 2; ++i) path[t + 1][i] = path[t][i] * (1.0 - gammas[t] * kCurvature[i]);
    }
    const Point& end = path[depth];
    loss += end[0] * end[0] + end[1] * end[1];
    Point bar = {2.0 * end[0] / count, 2.0 * end[1] / count};
    for (std::size_t t = depth; t-- > 0;) {
      for (std::size_t i = 0; i < 2; ++i) {
        grads[t] -= bar[i] * kCurvature[i] * path[t][i];
        bar[i] *= 1.0 - gammas[t] * kCurvature[i];
      }
    }
  }
  return loss / count;
}

}  // namespace

std::vector<double> tgd_train(const TgdConfig& config) {
  std::vector<double> gammas;
  std::vector<double> grads;
  std::vector<Point> starts(config.minibatch_size);
  for (std::size_t gen = 1; gen <= config.iterations; ++gen) {
    gammas.push_back(config.gamma_init);
    AdamState state(gammas.size());
    for (std::size_t b = 0; b < config.batches_per_generation; ++b) {
      Rng rng(derive_seed(config.seed, gen, b));
      for (auto& s : starts) s = random_start(rng, config.box);
      loss_and_gradient(starts, gammas, grads);
      adam_step(state, gammas, grads, config.lr);
    }
  }
  return gammas;
}

std::vector<double> mean_squared_error_curve(std::span<const double> gammas, std::size_t trials, double box,
                                             std::uint64_t seed) {
  std::vector<double> curve(gammas.size() + 1, 0.0);
  Rng rng(seed);
  for (std::size_t k = 0; k < trials; ++k) {
    const auto path = trajectory(random_start(rng, box), gammas);
    for (std::size_t t = 0; t < path.size(); ++t) curve[t] += path[t][0] * path[t][0] + path[t][1] * path[t][1];
  }
  for (double& c : curve) c /= static_cast<double>(trials);
  return curve;
}

}  // namespace tista::tgd
