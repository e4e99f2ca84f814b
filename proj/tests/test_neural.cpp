// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "risopt/neural.hpp"

using namespace risopt;
using namespace risopt::neural;
using chanmodel::ChannelPair;
using chanmodel::SystemConfig;
using sysmetrics::CompressedPrecoder;
using sysmetrics::PhaseVector;
using sysmetrics::Precoder;

namespace {

double rel_err(double got, double want) {
  const double scale = std::max(std::abs(want), 1e-9);
  return std::abs(got - want) / scale;
}

/// Error relative to the mixed allowance max(tol*max(|got|,|want|), floor);
/// values <= 1 are within tolerance.
double fd_ratio(double got, double want, double tol, double floor = 1e-9) {
  return std::abs(got - want) / std::max(tol * std::max(std::abs(got), std::abs(want)), floor);
}

SystemConfig small_cfg(int m, int n, int k) {
  SystemConfig cfg;
  cfg.num_bs_antennas = m;
  cfg.num_ris_elements = n;
  cfg.num_users = k;
  cfg.noise_power_w = 0.5;
  cfg.transmit_power_w = 1.0;
  return cfg;
}

struct TrajectoryFixture {
  SystemConfig cfg;
  ChannelPair ch;
  PhaseVector theta0;
  CompressedPrecoder x0;
  Precoder w0;
  MlpParams pn;
  MlpParams tn;

  TrajectoryFixture(int m, int n, int k, int hidden, Rng& rng) {
    cfg = small_cfg(m, n, k);
    ch.H = rng.cgaussian_matrix(k, n);
    ch.G = rng.cgaussian_matrix(n, m);
    RVec t(n);
    for (int i = 0; i < n; ++i) t(i) = rng.uniform(0.0, kTwoPi);
    theta0 = PhaseVector(t);
    const CMat hc0 = sysmetrics::cascaded(ch, theta0).Hc;
    x0 = sysmetrics::normalize_power(CompressedPrecoder{rng.cgaussian_matrix(k, k)}, hc0,
                                     cfg.transmit_power_w);
    w0 = sysmetrics::recover_w(hc0, x0);
    pn = make_mlp(2 * k, hidden, 2 * k, 1, rng);
    tn = make_mlp(n, hidden, n, 1, rng);
  }
};

/// Loss of the unrolled trajectory with the gradient inputs frozen from a
/// base run, which is the function the reverse pass differentiates.
double frozen_loss(const TrajectoryFixture& f, const MlpParams& pn, const MlpParams& tn,
                   const FrozenInputs& frozen) {
  TrajectoryConfig tc;
  tc.replay = &frozen;
  return trajectory_forward(f.ch, f.theta0, f.x0, f.w0, pn, tn, f.cfg, tc).loss;
}

}  // namespace

TEST_CASE("mlp_forward: zero parameters give zero output") {
  const MlpParams p = make_zero_mlp(4, 6, 4);
  CHECK(mlp_forward(p, RVec::Ones(4)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp_forward: padded identity passes nonnegative input through") {
  const int d = 3, hidden = 5;
  MlpParams p = make_zero_mlp(d, hidden, d);
  p.weights[0].topLeftCorner(d, d) = RMat::Identity(d, d);
  p.weights[1].topLeftCorner(d, d) = RMat::Identity(d, d);
  RVec x(d);
  x << 0.5, 0.0, 2.0;
  CHECK((mlp_forward(p, x) - x).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("mlp_forward matches a direct dense evaluation") {
  Rng rng(3);
  const MlpParams p = make_mlp(4, 7, 5, 1, rng);
  RVec x(4);
  for (int i = 0; i < 4; ++i) x(i) = rng.gaussian();
  const RVec z1 = p.weights[0] * x + p.biases[0];
  const RVec h = z1.cwiseMax(0.0);
  const RVec want = p.weights[1] * h + p.biases[1];
  CHECK((mlp_forward(p, x) - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mlp output layer is linear: doubling (W2, b2) doubles the output") {
  Rng rng(5);
  MlpParams p = make_mlp(3, 6, 3, 1, rng);
  RVec x(3);
  for (int i = 0; i < 3; ++i) x(i) = rng.gaussian();
  const RVec base = mlp_forward(p, x);
  p.weights[1] *= 2.0;
  p.biases[1] *= 2.0;
  CHECK((mlp_forward(p, x) - 2.0 * base).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("mlp_backward: zero upstream gives zero gradients") {
  Rng rng(7);
  const MlpParams p = make_mlp(3, 4, 3, 1, rng);
  const auto res = mlp_backward(p, RVec::Ones(3), RVec::Zero(3));
  CHECK(res.param_grads.squared_norm() == 0.0);
  CHECK(res.input_grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp_backward: hand-checked single-unit network") {
  // 1-1-1 network: y = w2 * relu(w1 x + b1) + b2 with the hidden unit on.
  MlpParams p = make_zero_mlp(1, 1, 1);
  const double w1 = 0.8, b1 = 0.2, w2 = -1.5, b2 = 0.4, x = 0.9, up = 1.0;
  p.weights[0](0, 0) = w1;
  p.biases[0](0) = b1;
  p.weights[1](0, 0) = w2;
  p.biases[1](0) = b2;
  RVec in(1), u(1);
  in(0) = x;
  u(0) = up;
  const auto res = mlp_backward(p, in, u);
  const double h = w1 * x + b1;  // > 0, ReLU active
  CHECK(res.param_grads.weights[1](0, 0) == doctest::Approx(up * h).epsilon(1e-14));
  CHECK(res.param_grads.biases[1](0) == doctest::Approx(up).epsilon(1e-14));
  CHECK(res.param_grads.weights[0](0, 0) == doctest::Approx(up * w2 * x).epsilon(1e-14));
  CHECK(res.param_grads.biases[0](0) == doctest::Approx(up * w2).epsilon(1e-14));
  CHECK(res.input_grad(0) == doctest::Approx(up * w2 * w1).epsilon(1e-14));
}

TEST_CASE("mlp_backward matches finite differences on every parameter") {
  Rng rng(11);
  const int in = 4, hidden = 6, out = 3;
  MlpParams p = make_mlp(in, hidden, out, 1, rng);
  RVec x(in), up(out);
  for (int i = 0; i < in; ++i) x(i) = rng.gaussian();
  for (int i = 0; i < out; ++i) up(i) = rng.gaussian();

  const auto res = mlp_backward(p, x, up);
  auto loss = [&](const MlpParams& q) { return up.dot(mlp_forward(q, x)); };

  const double eps = 1e-6;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) {
      MlpParams q = p;
      q.weights[l].data()[i] += eps;
      const double fp = loss(q);
      q.weights[l].data()[i] -= 2 * eps;
      const double fm = loss(q);
      CHECK(rel_err(res.param_grads.weights[l].data()[i], (fp - fm) / (2 * eps)) < 1e-6);
    }
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) {
      MlpParams q = p;
      q.biases[l].data()[i] += eps;
      const double fp = loss(q);
      q.biases[l].data()[i] -= 2 * eps;
      const double fm = loss(q);
      CHECK(rel_err(res.param_grads.biases[l].data()[i], (fp - fm) / (2 * eps)) < 1e-6);
    }
  }
  // Input gradient too.
  for (int i = 0; i < in; ++i) {
    RVec xp = x, xm = x;
    xp(i) += eps;
    xm(i) -= eps;
    CHECK(rel_err(res.input_grad(i), (up.dot(mlp_forward(p, xp)) - up.dot(mlp_forward(p, xm))) /
                                         (2 * eps)) < 1e-6);
  }
}

TEST_CASE("regulator values and range") {
  const RegulatorSpec spec{};  // lambda = 2 pi
  RVec z = RVec::Zero(3);
  const RVec at0 = regulator(z, spec);
  for (int i = 0; i < 3; ++i) CHECK(at0(i) == doctest::Approx(kPi).epsilon(1e-14));

  RVec big(1);
  big(0) = 60.0;
  const RVec hi = regulator(big, spec);
  CHECK(hi(0) < kTwoPi);
  CHECK(hi(0) > kTwoPi - 1e-10);

  RVec m3(1);
  m3(0) = -3.0;
  CHECK(regulator(m3, spec)(0) ==
        doctest::Approx(kTwoPi * 0.04742587317756678).epsilon(1e-12));

  Rng rng(13);
  RVec r(100);
  for (int i = 0; i < 100; ++i) r(i) = rng.gaussian() * 10.0;
  const RVec out = regulator(r, spec);
  for (int i = 0; i < 100; ++i) {
    CHECK(out(i) > 0.0);
    CHECK(out(i) < kTwoPi);
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Rng rng(17);
  MlpParams p = make_mlp(2, 3, 2, 1, rng);
  const MlpParams before = p;
  AdamState st = AdamState::zeros_like(p);
  adam_step(st, p.zeros_like(), p, 1e-3);
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    CHECK((p.weights[l] - before.weights[l]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((p.biases[l] - before.biases[l]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("adam: first step moves each entry by about lr") {
  Rng rng(19);
  MlpParams p = make_mlp(2, 3, 2, 1, rng);
  const MlpParams before = p;
  MlpParams g = p.zeros_like();
  for (auto& w : g.weights) w.setConstant(0.37);
  for (auto& b : g.biases) b.setConstant(-0.81);
  AdamState st = AdamState::zeros_like(p);
  const double lr = 1e-3;
  adam_step(st, g, p, lr);
  // Bias-corrected ratio m_hat/sqrt(v_hat) is +-1 up to epsilon on step 1.
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const RMat step = before.weights[l] - p.weights[l];
    CHECK(std::abs(step.minCoeff() - lr) < 1e-6 * lr);
    const RVec bstep = before.biases[l] - p.biases[l];
    CHECK(std::abs(bstep.cwiseAbs().minCoeff() - lr) < 1e-6 * lr);
    CHECK(bstep.maxCoeff() < 0.0);  // negative gradient moves parameters up
  }
}

TEST_CASE("adam: sign-flipping gradient displaces less than 2 lr") {
  MlpParams p = make_zero_mlp(1, 1, 1);
  MlpParams g = p.zeros_like();
  AdamState st = AdamState::zeros_like(p);
  const double lr = 0.01;
  g.weights[0](0, 0) = 1.0;
  adam_step(st, g, p, lr);
  g.weights[0](0, 0) = -1.0;
  adam_step(st, g, p, lr);
  CHECK(std::abs(p.weights[0](0, 0)) < 2.0 * lr);
}

TEST_CASE("adam is deterministic") {
  for (int run = 0; run < 2; ++run) {
    static MlpParams snapshot;
    Rng rng(21);
    MlpParams p = make_mlp(2, 4, 2, 1, rng);
    AdamState st = AdamState::zeros_like(p);
    MlpParams g = p.zeros_like();
    for (auto& w : g.weights) w.setConstant(0.1);
    for (int i = 0; i < 5; ++i) adam_step(st, g, p, 1e-3);
    if (run == 0) {
      snapshot = p;
    } else {
      for (std::size_t l = 0; l < p.weights.size(); ++l) {
        CHECK((p.weights[l] - snapshot.weights[l]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((p.biases[l] - snapshot.biases[l]).cwiseAbs().maxCoeff() == 0.0);
      }
    }
  }
}

TEST_CASE("trajectory: regulator keeps the phase update feasible") {
  Rng rng(23);
  TrajectoryFixture f(6, 8, 2, 8, rng);
  StepProbe probe;
  TrajectoryConfig tc;
  tc.inner_steps = 3;
  tc.probe = &probe;
  (void)trajectory_forward(f.ch, f.theta0, f.x0, f.w0, f.pn, f.tn, f.cfg, tc);
  for (double v : probe.regulator_min) CHECK(v > 0.0);
  for (double v : probe.regulator_max) CHECK(v < kTwoPi);
  for (double v : probe.unit_modulus_dev) CHECK(v <= 1e-12);
  for (double v : probe.power_ratio) CHECK(std::abs(v - 1.0) <= 1e-10);
}

TEST_CASE("trajectory: lambda = 0 makes the phase map constant and TN grads vanish") {
  Rng rng(29);
  TrajectoryFixture f(5, 6, 2, 6, rng);
  TrajectoryConfig tc;
  tc.regulator_lambda = 0.0;
  const auto res = trajectory_grads(f.ch, f.theta0, f.x0, f.w0, f.pn, f.tn, f.cfg, tc);
  CHECK(res.tn_grad.squared_norm() == 0.0);
  CHECK((res.theta_star.theta - f.theta0.theta).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("trajectory: zero networks against plain finite differences on b2") {
  // With all-zero parameters the networks emit constants, so the gradient
  // inputs do not react to the perturbed parameter and an unfrozen forward
  // differencing is already consistent.
  Rng rng(31);
  TrajectoryFixture f(8, 16, 2, 8, rng);
  f.pn.set_zero();
  f.tn.set_zero();
  TrajectoryConfig tc;

  const auto base = trajectory_grads(f.ch, f.theta0, f.x0, f.w0, f.pn, f.tn, f.cfg, tc);
  const double eps = 1e-6;
  for (int which = 0; which < 2; ++which) {
    MlpParams& target = which == 0 ? f.pn : f.tn;
    const MlpParams& grad = which == 0 ? base.pn_grad : base.tn_grad;
    for (Eigen::Index i = 0; i < target.biases[1].size(); ++i) {
      target.biases[1](i) += eps;
      const double fp = trajectory_forward(f.ch, f.theta0, f.x0, f.w0, f.pn, f.tn, f.cfg, tc).loss;
      target.biases[1](i) -= 2 * eps;
      const double fm = trajectory_forward(f.ch, f.theta0, f.x0, f.w0, f.pn, f.tn, f.cfg, tc).loss;
      target.biases[1](i) += eps;
      const double fd = (fp - fm) / (2 * eps);
      CHECK(fd_ratio(grad.biases[1](i), fd, 1e-5) <= 1.0);
    }
  }
}

TEST_CASE("single-step trajectory gradients match plain finite differences on all parameters") {
  // With one inner step the reverse pass differentiates the full forward
  // map, including the phase dependence of the precoding network's input,
  // so unmodified central differencing is the oracle.
  Rng rng(41);
  for (int trial = 0; trial < 2; ++trial) {
    TrajectoryFixture f(8, 16, 2, 6, rng);
    TrajectoryConfig tc;
    const auto base = trajectory_grads(f.ch, f.theta0, f.x0, f.w0, f.pn, f.tn, f.cfg, tc);

    auto plain_loss = [&]() {
      return trajectory_forward(f.ch, f.theta0, f.x0, f.w0, f.pn, f.tn, f.cfg, tc).loss;
    };
    const double eps = 1e-5;
    auto fd_check = [&](double& slot, double got) {
      slot += eps;
      const double fp = plain_loss();
      slot -= 2 * eps;
      const double fm = plain_loss();
      slot += eps;
      CHECK(fd_ratio(got, (fp - fm) / (2 * eps), 1e-5) <= 1.0);
    };
    for (std::size_t l = 0; l < f.pn.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < f.pn.weights[l].size(); ++i)
        fd_check(f.pn.weights[l].data()[i], base.pn_grad.weights[l].data()[i]);
      for (Eigen::Index i = 0; i < f.pn.biases[l].size(); ++i)
        fd_check(f.pn.biases[l].data()[i], base.pn_grad.biases[l].data()[i]);
    }
    for (std::size_t l = 0; l < f.tn.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < f.tn.weights[l].size(); ++i)
        fd_check(f.tn.weights[l].data()[i], base.tn_grad.weights[l].data()[i]);
      for (Eigen::Index i = 0; i < f.tn.biases[l].size(); ++i)
        fd_check(f.tn.biases[l].data()[i], base.tn_grad.biases[l].data()[i]);
    }
  }
}

TEST_CASE("detached trajectory gradients match frozen-input finite differences") {
  Rng rng(37);
  for (int trial = 0; trial < 3; ++trial) {
    TrajectoryFixture f(8, 16, 2, 6, rng);
    FrozenInputs frozen;
    TrajectoryConfig tc;
    tc.detach_inputs = true;
    tc.capture = &frozen;
    const auto base = trajectory_grads(f.ch, f.theta0, f.x0, f.w0, f.pn, f.tn, f.cfg, tc);

    const double eps = 1e-5;
    int checked = 0;
    auto fd_check = [&](bool is_pn, double& slot, double got) {
      slot += eps;
      const double fp = frozen_loss(f, f.pn, f.tn, frozen);
      slot -= 2 * eps;
      const double fm = frozen_loss(f, f.pn, f.tn, frozen);
      slot += eps;
      (void)is_pn;
      const double fd = (fp - fm) / (2 * eps);
      CHECK(fd_ratio(got, fd, 1e-5) <= 1.0);
      ++checked;
    };
    for (std::size_t l = 0; l < f.pn.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < f.pn.weights[l].size(); ++i)
        fd_check(true, f.pn.weights[l].data()[i], base.pn_grad.weights[l].data()[i]);
      for (Eigen::Index i = 0; i < f.pn.biases[l].size(); ++i)
        fd_check(true, f.pn.biases[l].data()[i], base.pn_grad.biases[l].data()[i]);
    }
    for (std::size_t l = 0; l < f.tn.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < f.tn.weights[l].size(); ++i)
        fd_check(false, f.tn.weights[l].data()[i], base.tn_grad.weights[l].data()[i]);
      for (Eigen::Index i = 0; i < f.tn.biases[l].size(); ++i)
        fd_check(false, f.tn.biases[l].data()[i], base.tn_grad.biases[l].data()[i]);
    }
    CHECK(checked > 0);
  }
}

TEST_CASE("trajectory forward equals grads forward and is deterministic") {
  Rng rng(41);
  TrajectoryFixture f(6, 10, 3, 10, rng);
  TrajectoryConfig tc;
  tc.inner_steps = 2;
  const auto a = trajectory_grads(f.ch, f.theta0, f.x0, f.w0, f.pn, f.tn, f.cfg, tc);
  const auto b = trajectory_forward(f.ch, f.theta0, f.x0, f.w0, f.pn, f.tn, f.cfg, tc);
  CHECK(a.loss == b.loss);
  CHECK((a.theta_star.theta - b.theta_star.theta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.x_star.X - b.x_star.X).cwiseAbs().maxCoeff() == 0.0);
}
