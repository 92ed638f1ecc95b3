#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "tista/errors.hpp"
#include "tista/recovery.hpp"

using namespace tista;

namespace {

SensingSystem gaussian_system(Eigen::Index m, Eigen::Index n, std::uint64_t seed, double nv = 0.0) {
  Rng rng(seed);
  return build_front_end(generate_matrix(EnsembleSpec::gaussian(m, n, 0.0, 1.0 / m), rng), FrontEnd::pseudo_inverse())
      .with_noise_var(nv);
}

Eigen::VectorXd gauss_vec(Eigen::Index n, double sd, Rng& rng) {
  std::normal_distribution<double> g(0.0, sd);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

// The TISTA / TISTA-MR recursion written out directly from the update
// formulas with dense recomputation of every trace.
RecoveryTrace reference_tista(const Eigen::MatrixXd& A, const Eigen::MatrixXd& W, double nv, const Eigen::VectorXd& y,
                              const std::vector<double>& gammas, double alpha2, double p, bool center) {
  const double m = static_cast<double>(A.rows()), n = static_cast<double>(A.cols());
  const double tr_ata = (A.transpose() * A).trace();
  const double tr_wwt = (W * W.transpose()).trace();
  RecoveryTrace trace;
  trace.iterations.push_back({Eigen::VectorXd::Zero(A.cols()), {}, NAN, NAN, NAN});
  for (double g : gammas) {
    const Eigen::VectorXd& s = trace.iterations.back().s;
    Eigen::VectorXd u = y - A * s;
    if (center) u.array() -= u.mean();
    const double v2 = std::max((u.squaredNorm() - m * nv) / tr_ata, 1e-9);
    const double tau2 = v2 / n * (n + (g * g - 2 * g) * m) + g * g * nv * tr_wwt / n;
    const Eigen::VectorXd r = s + g * W * u;
    Eigen::VectorXd next(r.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) next[i] = eta_mmse_bg(r[i], tau2, alpha2, p);
    trace.iterations.push_back({next, r, v2, tau2, NAN});
  }
  return trace;
}

void check_same(const RecoveryTrace& a, const RecoveryTrace& b, double tol) {
  REQUIRE(a.iterations.size() == b.iterations.size());
  for (std::size_t t = 1; t < a.iterations.size(); ++t) {
    CAPTURE(t);
    CHECK((a.iterations[t].s - b.iterations[t].s).norm() <= tol * (1.0 + b.iterations[t].s.norm()));
    CHECK(std::abs(a.iterations[t].v2 - b.iterations[t].v2) <= tol * b.iterations[t].v2);
    CHECK(std::abs(a.iterations[t].tau2 - b.iterations[t].tau2) <= tol * b.iterations[t].tau2);
  }
}

}  // namespace

TEST_CASE("estimate_v2 clamps to epsilon") {
  const auto sys = gaussian_system(20, 40, 1);
  Rng rng(2);
  const Eigen::VectorXd s = gauss_vec(40, 1.0, rng);
  CHECK(estimate_v2(sys, sys.A() * s, s, 1e-9) == 1e-9);
  const auto noisy = sys.with_noise_var(100.0);
  const double v = estimate_v2(noisy, sys.A() * s + gauss_vec(20, 0.01, rng), s, 1e-9);
  CHECK(v == 1e-9);
}

TEST_CASE("estimate_v2 is unbiased for i.i.d. Gaussian errors") {
  const double nv = 0.01, v2 = 0.25;
  const auto sys = gaussian_system(250, 500, 3, nv);
  Rng rng(4);
  const auto prior = SparseSignalPrior::bernoulli_gaussian(0.1, 1.0);
  double acc = 0.0;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) {
    const Eigen::VectorXd x = sample_signal(prior, 500, rng);
    const Eigen::VectorXd s = x + gauss_vec(500, std::sqrt(v2), rng);
    const Eigen::VectorXd y = sys.A() * x + gauss_vec(250, std::sqrt(nv), rng);
    acc += estimate_v2(sys, y, s);
  }
  CHECK(std::abs(acc / draws / v2 - 1.0) < 0.02);
}

TEST_CASE("estimate_tau2 closed forms") {
  const auto sys = gaussian_system(50, 100, 5, 0.02);
  CHECK(estimate_tau2(sys, 0.3, 0.0) == 0.3);
  CHECK(estimate_tau2(sys, 0.3, 1.0) == doctest::Approx(0.3 * 50.0 / 100.0 + 0.02 * sys.tr_WWt() / 100.0));
  CHECK_THROWS_AS(estimate_tau2(sys, -1.0, 1.0), ParameterError);
}

TEST_CASE("estimate_tau2 matches the empirical linear-stage error") {
  const double nv = 0.01, v2 = 0.25;
  const auto sys = gaussian_system(250, 500, 6, nv);
  const auto prior = SparseSignalPrior::bernoulli_gaussian(0.1, 1.0);
  for (double gamma : {0.5, 1.0, 2.0}) {
    CAPTURE(gamma);
    Rng rng(7);
    double acc = 0.0;
    const int draws = 10000;
    for (int k = 0; k < draws; ++k) {
      const Eigen::VectorXd x = sample_signal(prior, 500, rng);
      const Eigen::VectorXd s = x + gauss_vec(500, std::sqrt(v2), rng);
      const Eigen::VectorXd y = sys.A() * x + gauss_vec(250, std::sqrt(nv), rng);
      const Eigen::VectorXd r = s + gamma * sys.W() * (y - sys.A() * s);
      acc += (r - x).squaredNorm() / 500.0;
    }
    CHECK(std::abs(acc / draws / estimate_tau2(sys, v2, gamma) - 1.0) < 0.02);
  }
}

TEST_CASE("OAMP tau^2 equals the TISTA estimator at gamma = 1 for the pseudo-inverse") {
  const auto sys = gaussian_system(250, 500, 8, 0.003);
  CHECK(std::abs(sys.tr_BBt() - 250.0) < 1e-6 * 250.0);
  for (double v2 : {1e-6, 0.01, 0.4}) {
    CHECK(estimate_tau2_oamp(sys, v2) == doctest::Approx(estimate_tau2(sys, v2, 1.0)).epsilon(1e-8));
  }
}

TEST_CASE("nmse_db") {
  Eigen::VectorXd x(3);
  x << 1.0, -2.0, 0.5;
  CHECK(nmse_db(Eigen::VectorXd::Zero(3), x) == doctest::Approx(0.0));
  CHECK(nmse_db(x, x) == kNmseFloorDb);
  CHECK(nmse_db(x * 1.1, x) == doctest::Approx(-20.0));
}

TEST_CASE("ISTA fixed point and least squares limit") {
  const auto sys = gaussian_system(20, 40, 9);
  const auto trace = run_ista(sys, Eigen::VectorXd::Zero(20), 10, ista_default_step(sys), 0.1);
  REQUIRE(trace.rounds() == 10);
  for (const auto& it : trace.iterations) CHECK(it.s.isZero(0.0));

  Rng rng(10);
  const Eigen::MatrixXd G = gauss_vec(20 * 40, 1.0, rng).reshaped(40, 20);
  const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ();
  const auto ortho = build_front_end(Q.leftCols(20).transpose(), FrontEnd::pseudo_inverse());
  const Eigen::VectorXd y = gauss_vec(20, 1.0, rng);
  const auto ls = run_ista(ortho, y, 20, 1.0, 0.0);
  const Eigen::VectorXd min_norm = ortho.A().transpose() * y;
  CHECK((ls.estimate() - min_norm).norm() < 1e-12);
  CHECK(std::abs(ista_default_step(sys) * sys.singular_values()[0] * sys.singular_values()[0] - 1.0) < 1e-12);
}

TEST_CASE("ISTA divergence is reported with the iteration") {
  const auto sys = gaussian_system(20, 40, 11);
  Rng rng(12);
  const Eigen::VectorXd y = gauss_vec(20, 1.0, rng);
  try {
    run_ista(sys, y, 500, 10.0 * ista_default_step(sys), 0.0);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.iteration() > 0);
    CHECK(e.iteration() <= 500);
  }
}

TEST_CASE("AMP first iteration has no Onsager term") {
  const auto sys = gaussian_system(30, 60, 13);
  Rng rng(14);
  const Eigen::VectorXd y = gauss_vec(30, 1.0, rng);
  const auto trace = run_amp(sys, y, 1, 1.14);
  const double tau = 1.14 / std::sqrt(30.0) * y.norm();
  CHECK((trace.estimate() - eta_soft(sys.A().transpose() * y, tau)).norm() < 1e-14);
}

TEST_CASE("AMP second iteration matches a hand-written step") {
  const auto sys = gaussian_system(30, 60, 15);
  Rng rng(16);
  const Eigen::VectorXd y = gauss_vec(30, 1.0, rng);
  const auto trace = run_amp(sys, y, 2, 1.14);
  const Eigen::MatrixXd& A = sys.A();
  const Eigen::VectorXd r0 = y;
  const Eigen::VectorXd s1 = eta_soft(A.transpose() * r0, 1.14 / std::sqrt(30.0) * r0.norm());
  const double b1 = static_cast<double>((s1.array() != 0.0).count()) / 30.0;
  const Eigen::VectorXd r1 = y - A * s1 + b1 * r0;
  const Eigen::VectorXd s2 = eta_soft(s1 + A.transpose() * r1, 1.14 / std::sqrt(30.0) * r1.norm());
  CHECK((trace.estimate() - s2).norm() < 1e-12);
}

TEST_CASE("OAMP stays at zero on a zero observation") {
  const auto sys = gaussian_system(20, 40, 17, 0.0);
  const auto trace = run_oamp(sys, Eigen::VectorXd::Zero(20), 6, SparseSignalPrior::bernoulli_gaussian(0.1, 1.0));
  for (const auto& it : trace.iterations) CHECK(it.s.isZero(0.0));
}

TEST_CASE("OAMP one step matches the divergence-free construction") {
  const double nv = 1e-3;
  const auto sys = gaussian_system(40, 80, 18, nv);
  const auto prior = SparseSignalPrior::bernoulli_gaussian(0.1, 1.0);
  Rng rng(19);
  const Eigen::VectorXd x = sample_signal(prior, 80, rng);
  const Eigen::VectorXd y = observe(sys, x, rng);
  const auto trace = run_oamp(sys, y, 1, prior);

  const Eigen::MatrixXd& A = sys.A();
  const Eigen::MatrixXd Bm = Eigen::MatrixXd::Identity(80, 80) - sys.W() * A;
  const double v2 = std::max((y.squaredNorm() - 40 * nv) / (A.transpose() * A).trace(), 1e-9);
  const double tau2 = (Bm * Bm.transpose()).trace() / 80 * v2 + (sys.W() * sys.W().transpose()).trace() * nv / 80;
  const Eigen::VectorXd r = sys.W() * y;
  const double h = 1e-6;
  double mean_slope = 0.0;
  Eigen::VectorXd eta(80);
  for (int i = 0; i < 80; ++i) {
    eta[i] = eta_mmse_bg(r[i], tau2, prior);
    mean_slope += (eta_mmse_bg(r[i] + h, tau2, prior) - eta_mmse_bg(r[i] - h, tau2, prior)) / (2 * h) / 80;
  }
  const Eigen::VectorXd s1 = (eta - mean_slope * r) / (1.0 - mean_slope);
  CHECK((trace.estimate() - s1).norm() < 1e-6 * s1.norm());
  CHECK(trace.iterations[1].v2 == doctest::Approx(v2).epsilon(1e-10));
  CHECK(trace.iterations[1].tau2 == doctest::Approx(tau2).epsilon(1e-8));
}

TEST_CASE("TISTA with zero step sizes never leaves zero") {
  const auto sys = gaussian_system(20, 40, 20, 0.01);
  Rng rng(21);
  TistaParams params{std::vector<double>(5, 0.0), std::nullopt};
  const auto trace = run_tista(sys, gauss_vec(20, 1.0, rng), params, SparseSignalPrior::bernoulli_gaussian(0.1, 1.0));
  for (const auto& it : trace.iterations) CHECK(it.s.isZero(0.0));
}

TEST_CASE("TISTA matches the reference recursion") {
  const double nv = 2e-4;
  const auto sys = gaussian_system(60, 120, 22, nv);
  const auto prior = SparseSignalPrior::bernoulli_gaussian(0.1, 1.0);
  Rng rng(23);
  const Eigen::VectorXd x = sample_signal(prior, 120, rng);
  const Eigen::VectorXd y = observe(sys, x, rng);
  const std::vector<double> gammas = {1.3, 2.1, 0.9, 3.0, 1.7, 2.4};

  check_same(run_tista(sys, y, {gammas, std::nullopt}, prior),
             reference_tista(sys.A(), sys.W(), nv, y, gammas, 1.0, 0.1, false), 1e-10);
  check_same(run_tista(sys, y, {gammas, ShrinkageParams{2.5, 0.2}}, prior),
             reference_tista(sys.A(), sys.W(), nv, y, gammas, 2.5, 0.2, false), 1e-10);

  const auto partial = run_tista(sys, y, {gammas, std::nullopt}, prior, 3);
  CHECK(partial.rounds() == 3);
  CHECK_THROWS_AS(run_tista(sys, y, {gammas, std::nullopt}, prior, 7), ConfigError);

  auto with_truth = run_tista(sys, y, {gammas, std::nullopt}, prior);
  attach_nmse(with_truth, x);
  CHECK(with_truth.iterations[0].nmse_db == doctest::Approx(0.0));
  CHECK(with_truth.iterations.back().nmse_db < -10.0);
}

TEST_CASE("TISTA-LMMSE runs the same recursion with the regularized W") {
  Rng rng(24);
  const auto A = generate_conditioned(100.0, 40, 80, rng);
  const double nv = 1e-4;
  const auto sys = build_front_end(A, FrontEnd::regularized(5e-4)).with_noise_var(nv);
  const auto prior = SparseSignalPrior::bernoulli_gaussian(0.1, 1.0);
  const Eigen::VectorXd x = sample_signal(prior, 80, rng);
  const Eigen::VectorXd y = observe(sys, x, rng);
  const std::vector<double> gammas = {1.0, 1.5, 2.0};
  check_same(run_tista(sys, y, {gammas, std::nullopt}, prior),
             reference_tista(A, sys.W(), nv, y, gammas, 1.0, 0.1, false), 1e-10);
}

TEST_CASE("TISTA-MR") {
  const double nv = 1e-5;
  Rng rng(25);
  const Eigen::MatrixXd A = generate_matrix(EnsembleSpec::gaussian(60, 120, 1.0, 1.0 / 60), rng);
  const auto prior = SparseSignalPrior::bernoulli_gaussian(0.1, 1.0);
  const std::vector<double> gammas = {1.2, 2.0, 1.5, 2.5};
  const Eigen::VectorXd x = sample_signal(prior, 120, rng);

  SUBCASE("zero offset reproduces plain TISTA") {
    const Eigen::MatrixXd A0 = (A.array() - 1.0).matrix();
    const auto sys = mean_removed_system(A0, 0.0).with_noise_var(nv);
    const Eigen::VectorXd y = observe(sys, x, rng);
    const auto mr = run_tista_mr(sys, y, {gammas, std::nullopt}, prior);
    const auto plain = run_tista(sys, y, {gammas, std::nullopt}, prior);
    for (std::size_t t = 0; t < mr.iterations.size(); ++t) {
      CHECK((mr.iterations[t].s - plain.iterations[t].s).norm() <= 1e-12 * (1.0 + plain.iterations[t].s.norm()));
    }
  }

  SUBCASE("centered recursion on the shifted matrix") {
    const auto sys = mean_removed_system(A, 1.0).with_noise_var(nv);
    const Eigen::VectorXd y = observe(sys, x, rng);
    CHECK((y - A * x).norm() < 0.1);
    check_same(run_tista_mr(sys, y, {gammas, std::nullopt}, prior),
               reference_tista(sys.A(), sys.W(), nv, y, gammas, 1.0, 0.1, true), 1e-10);
  }
}

TEST_CASE("trace CSV") {
  const auto sys = gaussian_system(20, 40, 26, 1e-3);
  Rng rng(27);
  const auto prior = SparseSignalPrior::bernoulli_gaussian(0.1, 1.0);
  const Eigen::VectorXd x = sample_signal(prior, 40, rng);
  auto trace = run_tista(sys, observe(sys, x, rng), {{1.0, 1.0}, std::nullopt}, prior);
  attach_nmse(trace, x);
  std::ostringstream out;
  write_trace_csv(out, trace);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "iter,v2_est,tau2_est,nmse_db");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("parameter counts") {
  TistaParams params{std::vector<double>(12, 1.0), std::nullopt};
  CHECK(params.trainable_count() == 12);
  params.shrinkage = ShrinkageParams{1.0, 0.1};
  CHECK(params.trainable_count() == 14);
  params.gammas[3] = std::nan("");
  CHECK_THROWS(params.validate());
}
