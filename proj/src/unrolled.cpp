#include "tista/unrolled.hpp"

#include <cmath>
#include <string>

#include "tista/errors.hpp"

namespace tista {

namespace {

// Intermediate values of one round kept for the backward sweep.
struct RoundTape {
  Eigen::MatrixXd residual;    // (centered) y - A s_t
  Eigen::MatrixXd correction;  // W residual
  Eigen::MatrixXd r;           // s_t + gamma * correction
  Eigen::VectorXd v2;
  Eigen::VectorXd tau2;
  std::vector<bool> clamped;
};

class Unroller {
 public:
  Unroller(const SensingSystem& system, const TistaParams& params, const SparseSignalPrior& prior,
           std::size_t generation, TistaVariant variant, double epsilon)
      : system_(system),
        params_(params),
        shrink_(params.shrinkage_or(prior)),
        generation_(generation),
        center_(variant == TistaVariant::MeanRemoved && system.mean_removed()),
        epsilon_(epsilon) {
    params.validate();
    if (generation > params.rounds()) {
      throw ConfigError("generation", "generation " + std::to_string(generation) + " exceeds the " +
                                          std::to_string(params.rounds()) + " available step sizes");
    }
    if (!(epsilon > 0.0)) throw ParameterError("epsilon must be positive");
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& y, std::vector<RoundTape>* tape) const {
    if (y.rows() != system_.m()) throw ShapeError("unrolled: observation rows do not match m");
    const Eigen::Index batch = y.cols();
    const double n = static_cast<double>(system_.n());
    const double m = static_cast<double>(system_.m());

    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(system_.n(), batch);
    for (std::size_t t = 0; t < generation_; ++t) {
      const double gamma = params_.gammas[t];
      RoundTape round;
      if (t == 0) {
        round.residual = y;
      } else {
        round.residual = y;
        round.residual.noalias() -= system_.A() * s;
      }
      if (center_) round.residual.rowwise() -= round.residual.colwise().mean();

      round.v2.resize(batch);
      round.tau2.resize(batch);
      round.clamped.assign(static_cast<std::size_t>(batch), false);
      const double tau_scale = (n + (gamma * gamma - 2.0 * gamma) * m) / n;
      const double tau_noise = gamma * gamma * system_.noise_var() * system_.tr_WWt() / n;
      for (Eigen::Index j = 0; j < batch; ++j) {
        const double raw = (round.residual.col(j).squaredNorm() - m * system_.noise_var()) / system_.tr_AtA();
        const bool clamp = !(raw > epsilon_);
        round.clamped[static_cast<std::size_t>(j)] = clamp;
        round.v2[j] = clamp ? epsilon_ : raw;
        round.tau2[j] = round.v2[j] * tau_scale + tau_noise;
      }

      round.correction.noalias() = system_.W() * round.residual;
      round.r = s + gamma * round.correction;
      for (Eigen::Index j = 0; j < batch; ++j) {
        const BgDenoiser denoiser(round.tau2[j], shrink_.alpha2, shrink_.p);
        const double* rin = round.r.col(j).data();
        double* sout = s.col(j).data();
        for (Eigen::Index i = 0; i < s.rows(); ++i) sout[i] = denoiser.value(rin[i]);
      }
      if (!s.allFinite()) {
        throw TrainingDivergenceError("unrolled TISTA produced non-finite values in round " + std::to_string(t),
                                      generation_);
      }
      if (tape) tape->push_back(std::move(round));
    }
    return s;
  }

  LossAndGradient loss_and_gradient(const Batch& batch) const {
    if (batch.x.cols() != batch.y.cols() || batch.x.rows() != system_.n()) {
      throw ShapeError("loss_and_gradient: batch shape mismatch");
    }
    const double count = static_cast<double>(batch.size());
    const bool with_shrink = params_.shrinkage.has_value();

    LossAndGradient out;
    out.grads.assign(generation_ + (with_shrink ? 2 : 0), 0.0);

    std::vector<RoundTape> tape;
    tape.reserve(generation_);
    const Eigen::MatrixXd s = forward(batch.y, &tape);
    Eigen::MatrixXd sbar = s - batch.x;
    out.loss = sbar.squaredNorm() / count;
    if (!std::isfinite(out.loss)) {
      throw TrainingDivergenceError("non-finite training loss", generation_);
    }
    if (generation_ == 0) return out;
    sbar *= 2.0 / count;

    const double n = static_cast<double>(system_.n());
    const double m = static_cast<double>(system_.m());
    double alpha2_bar = 0.0;
    double p_bar = 0.0;
    Eigen::MatrixXd rbar(system_.n(), batch.size());
    Eigen::MatrixXd ebar;
    Eigen::VectorXd tau2_bar(batch.size());

    for (std::size_t k = generation_; k-- > 0;) {
      const RoundTape& round = tape[k];
      const double gamma = params_.gammas[k];

      for (Eigen::Index j = 0; j < batch.size(); ++j) {
        const BgDenoiser denoiser(round.tau2[j], shrink_.alpha2, shrink_.p);
        const double* rin = round.r.col(j).data();
        const double* gin = sbar.col(j).data();
        double* rout = rbar.col(j).data();
        double tau_acc = 0.0;
        for (Eigen::Index i = 0; i < rbar.rows(); ++i) {
          const MmsePartials d = denoiser.partials(rin[i]);
          rout[i] = gin[i] * d.d_y;
          tau_acc += gin[i] * d.d_noise_var;
          alpha2_bar += gin[i] * d.d_alpha2;
          p_bar += gin[i] * d.d_p;
        }
        tau2_bar[j] = tau_acc;
      }

      // tau2 = v2 (n + (g^2 - 2g) m) / n + g^2 sigma^2 tr(WW^T) / n
      const double dtau_dv2 = (n + (gamma * gamma - 2.0 * gamma) * m) / n;
      const double dtau_dgamma_noise = 2.0 * gamma * system_.noise_var() * system_.tr_WWt() / n;
      double gamma_bar = (rbar.array() * round.correction.array()).sum();
      Eigen::VectorXd v2_scale(batch.size());
      for (Eigen::Index j = 0; j < batch.size(); ++j) {
        gamma_bar += tau2_bar[j] * (round.v2[j] * (2.0 * gamma - 2.0) * m / n + dtau_dgamma_noise);
        const double v2_bar = round.clamped[static_cast<std::size_t>(j)] ? 0.0 : tau2_bar[j] * dtau_dv2;
        v2_scale[j] = 2.0 * v2_bar / system_.tr_AtA();
      }
      out.grads[k] = gamma_bar;

      if (k == 0) break;  // s_0 is constant

      ebar.noalias() = gamma * (system_.W().transpose() * rbar);
      ebar += round.residual * v2_scale.asDiagonal();
      if (center_) ebar.rowwise() -= ebar.colwise().mean();
      sbar = rbar;
      sbar.noalias() -= system_.A().transpose() * ebar;
    }

    if (with_shrink) {
      out.grads[generation_] = alpha2_bar;
      out.grads[generation_ + 1] = p_bar;
    }
    for (double g : out.grads) {
      if (!std::isfinite(g)) throw TrainingDivergenceError("non-finite gradient", generation_);
    }
    return out;
  }

 private:
  const SensingSystem& system_;
  const TistaParams& params_;
  ShrinkageParams shrink_;
  std::size_t generation_;
  bool center_;
  double epsilon_;
};

}  // namespace

Batch sample_batch(const SensingSystem& system, const SparseSignalPrior& prior, Eigen::Index size, Rng& rng) {
  if (size < 1) throw ParameterError("sample_batch: size must be >= 1");
  Batch batch;
  batch.x.resize(system.n(), size);
  for (Eigen::Index j = 0; j < size; ++j) batch.x.col(j) = sample_signal(prior, system.n(), rng);
  batch.y = observe_batch(system, batch.x, rng);
  return batch;
}

LossAndGradient loss_and_gradient(const SensingSystem& system, const Batch& batch, const TistaParams& params,
                                  std::size_t generation, const SparseSignalPrior& prior, TistaVariant variant,
                                  double epsilon) {
  return Unroller(system, params, prior, generation, variant, epsilon).loss_and_gradient(batch);
}

Eigen::MatrixXd unrolled_forward(const SensingSystem& system, const Eigen::MatrixXd& y, const TistaParams& params,
                                 std::size_t generation, const SparseSignalPrior& prior, TistaVariant variant,
                                 double epsilon) {
  return Unroller(system, params, prior, generation, variant, epsilon).forward(y, nullptr);
}

double batch_loss(const SensingSystem& system, const Batch& batch, const TistaParams& params,
                  std::size_t generation, const SparseSignalPrior& prior, TistaVariant variant, double epsilon) {
  const Eigen::MatrixXd s = unrolled_forward(system, batch.y, params, generation, prior, variant, epsilon);
  return (s - batch.x).squaredNorm() / static_cast<double>(batch.size());
}

}  // namespace tista
