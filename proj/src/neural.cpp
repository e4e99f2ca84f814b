// SPDX-License-Identifier: Apache-2.0

#include "risopt/neural.hpp"

#include <chrono>
#include <stdexcept>

namespace risopt::neural {

namespace {

constexpr double kLn2 = 0.6931471805599453;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Input RMS for the theta network; larger than the precoder family's so
// early epochs explore more phase patterns.
constexpr double kTnInputScale = 3.0;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

[[noreturn]] void stage_fail(const char* stage) {
  throw std::runtime_error(std::string("trajectory: non-finite value at stage ") + stage);
}

void check_finite(const RVec& v, const char* stage) {
  if (!v.allFinite()) stage_fail(stage);
}

void check_finite(const CMat& m, const char* stage) {
  if (!m.allFinite()) stage_fail(stage);
}

}  // namespace

MlpParams MlpParams::zeros_like() const {
  MlpParams out;
  out.weights.reserve(weights.size());
  out.biases.reserve(biases.size());
  for (const auto& w : weights) out.weights.push_back(RMat::Zero(w.rows(), w.cols()));
  for (const auto& b : biases) out.biases.push_back(RVec::Zero(b.size()));
  return out;
}

void MlpParams::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

void MlpParams::accumulate(const MlpParams& other, double factor) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += factor * other.weights[l];
    biases[l] += factor * other.biases[l];
  }
}

void MlpParams::scale(double factor) {
  for (auto& w : weights) w *= factor;
  for (auto& b : biases) b *= factor;
}

double MlpParams::squared_norm() const {
  double acc = 0.0;
  for (const auto& w : weights) acc += w.squaredNorm();
  for (const auto& b : biases) acc += b.squaredNorm();
  return acc;
}

MlpParams make_mlp(int in_dim, int hidden_dim, int out_dim, int hidden_layers, Rng& rng) {
  if (in_dim < 1 || hidden_dim < 1 || out_dim < 1 || hidden_layers < 1)
    throw std::invalid_argument("make_mlp: all dimensions must be >= 1");
  MlpParams p;
  int prev = in_dim;
  for (int l = 0; l < hidden_layers + 1; ++l) {
    const int cur = (l == hidden_layers) ? out_dim : hidden_dim;
    const double bound = std::sqrt(1.0 / prev);
    RMat w(cur, prev);
    RVec b(cur);
    for (int i = 0; i < cur; ++i) {
      for (int j = 0; j < prev; ++j) w(i, j) = rng.uniform(-bound, bound);
      b(i) = rng.uniform(-bound, bound);
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
    prev = cur;
  }
  return p;
}

MlpParams make_zero_mlp(int in_dim, int hidden_dim, int out_dim, int hidden_layers) {
  MlpParams p;
  int prev = in_dim;
  for (int l = 0; l < hidden_layers + 1; ++l) {
    const int cur = (l == hidden_layers) ? out_dim : hidden_dim;
    p.weights.push_back(RMat::Zero(cur, prev));
    p.biases.push_back(RVec::Zero(cur));
    prev = cur;
  }
  return p;
}

namespace {

/// Cached activations of one forward pass: act[0] is the input, act[l] the
/// post-ReLU output of hidden layer l, act.back() the linear output.
struct MlpWorkspace {
  std::vector<RVec> act;
};

RVec forward_ws(const MlpParams& p, const RVec& input, MlpWorkspace& ws) {
  const std::size_t layers = p.weights.size();
  ws.act.assign(layers + 1, RVec());
  ws.act[0] = input;
  for (std::size_t l = 0; l < layers; ++l) {
    RVec z = p.weights[l] * ws.act[l] + p.biases[l];
    if (l + 1 < layers) z = z.cwiseMax(0.0);
    ws.act[l + 1] = std::move(z);
  }
  return ws.act.back();
}

/// Accumulates parameter gradients into `grads`; returns the input
/// cotangent if requested.
void backward_ws(const MlpParams& p, const MlpWorkspace& ws, const RVec& upstream,
                 MlpParams& grads, RVec* input_grad) {
  const std::size_t layers = p.weights.size();
  RVec delta = upstream;
  for (std::size_t l = layers; l-- > 0;) {
    grads.weights[l] += delta * ws.act[l].transpose();
    grads.biases[l] += delta;
    RVec prev = p.weights[l].transpose() * delta;
    if (l > 0) {
      // ReLU mask; subgradient at 0 taken as 0.
      for (Eigen::Index i = 0; i < prev.size(); ++i)
        if (!(ws.act[l](i) > 0.0)) prev(i) = 0.0;
    }
    delta = std::move(prev);
  }
  if (input_grad) *input_grad = delta;
}

}  // namespace

RVec mlp_forward(const MlpParams& params, const RVec& input) {
  if (input.size() != params.input_dim())
    throw std::invalid_argument("mlp_forward: input length mismatch");
  MlpWorkspace ws;
  return forward_ws(params, input, ws);
}

MlpBackwardResult mlp_backward(const MlpParams& params, const RVec& input, const RVec& upstream) {
  if (input.size() != params.input_dim())
    throw std::invalid_argument("mlp_backward: input length mismatch");
  if (upstream.size() != params.output_dim())
    throw std::invalid_argument("mlp_backward: upstream length mismatch");
  MlpWorkspace ws;
  forward_ws(params, input, ws);
  MlpBackwardResult out{params.zeros_like(), RVec()};
  backward_ws(params, ws, upstream, out.param_grads, &out.input_grad);
  return out;
}

RVec regulator(const RVec& delta_theta_raw, const RegulatorSpec& spec) {
  if (!(spec.lambda > 0.0) && spec.lambda != 0.0)
    throw std::invalid_argument("regulator: lambda must be >= 0");
  RVec out(delta_theta_raw.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    double v = spec.lambda * sigmoid(delta_theta_raw(i));
    // The sigmoid saturates in floating point; keep the interval open.
    if (spec.lambda > 0.0) {
      if (v >= spec.lambda) v = std::nextafter(spec.lambda, 0.0);
      if (v <= 0.0) v = std::numeric_limits<double>::min();
    }
    out(i) = v;
  }
  return out;
}

RVec normalize_input(const RVec& v, double target_rms) {
  const double rms = std::sqrt(v.squaredNorm() / std::max<double>(1.0, static_cast<double>(v.size())));
  return rms > 0.0 ? RVec((target_rms / rms) * v) : v;
}

CMat normalize_input(const CMat& m, double target_rms) {
  const double rms = std::sqrt(m.squaredNorm() / std::max<double>(1.0, static_cast<double>(m.size())));
  return rms > 0.0 ? CMat((target_rms / rms) * m) : m;
}

CMat normalize_input_vjp(const CMat& raw, const CMat& out_cotangent, double target_rms) {
  const double sz = std::max<double>(1.0, static_cast<double>(raw.size()));
  const double q = raw.squaredNorm() / sz;
  if (!(q > 0.0)) return out_cotangent;
  const double s = target_rms / std::sqrt(q);
  const double s_bar = (out_cotangent.cwiseProduct(raw.conjugate())).sum().real();
  const double q_bar = s_bar * (-s / (2.0 * q));
  return s * out_cotangent + (q_bar * 2.0 / sz) * raw;
}

AdamState AdamState::zeros_like(const MlpParams& params) {
  AdamState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  s.t = 0;
  return s;
}

void adam_step(AdamState& state, const MlpParams& grads, MlpParams& params, double lr,
               const AdamOptions& opts) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be > 0");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.t));
  auto update = [&]<typename T>(T& m, T& v, const T& g, T& p) {
    m = opts.beta1 * m + (1.0 - opts.beta1) * g;
    v = opts.beta2 * v + (1.0 - opts.beta2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opts.epsilon);
  };
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    update(state.m.weights[l], state.v.weights[l], grads.weights[l], params.weights[l]);
    update(state.m.biases[l], state.v.biases[l], grads.biases[l], params.biases[l]);
  }
}

namespace {

using sysmetrics::CascadedChannel;

struct SeBackward {
  CMat s_bar;  // doubled cotangent of S = Hc * W
};

/// Weighted sum rate from the K x K signal matrix; also exposes per-user
/// total/interference-plus-noise powers for the backward pass.
double rate_from_signals(const CMat& S, const SystemConfig& cfg, RVec& total, RVec& interf) {
  const Eigen::Index k = S.rows();
  total.resize(k);
  interf.resize(k);
  double rate = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    double sig = 0.0, cross = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double p = std::norm(S(i, j));
      if (j == i)
        sig = p;
      else
        cross += p;
    }
    interf(i) = cfg.noise_power_w + cross;
    total(i) = interf(i) + sig;
    rate += cfg.weight(static_cast<int>(i)) * std::log1p(sig / interf(i)) / kLn2;
  }
  return rate;
}

/// Cotangent of S given dL/dR = r_bar.
CMat rate_backward(const CMat& S, const SystemConfig& cfg, const RVec& total, const RVec& interf,
                   double r_bar) {
  const Eigen::Index k = S.rows();
  CMat s_bar(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double wi = cfg.weight(static_cast<int>(i)) / kLn2;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double c = 1.0 / total(i) - (i == j ? 0.0 : 1.0 / interf(i));
      s_bar(i, j) = r_bar * 2.0 * wi * c * S(i, j);
    }
  }
  return s_bar;
}

struct PnStepCache {
  CMat gx;               // detached gradient input
  std::vector<MlpWorkspace> col_ws;
  CMat delta_x;
  CMat x_prime;          // X + dX
  CMat w_tilde;          // Hc^H x_prime
  double pw = 0.0;       // ||w_tilde||_F^2
  double scale = 0.0;    // sqrt(P / pw)
  CMat x_next;
};

struct TnStepCache {
  RVec gth;              // detached gradient input
  MlpWorkspace ws;
  RVec sig;              // sigmoid(network output)
};

}  // namespace

static TrajectoryResult trajectory_grads_impl(const ChannelPair& ch, const PhaseVector& theta_init,
                                              const CompressedPrecoder& x_init,
                                              const CompressedPrecoder& x_star_in,
                                              const MlpParams& params_pn,
                                              const MlpParams& params_tn, const SystemConfig& cfg,
                                              const TrajectoryConfig& traj, bool want_grads) {
  cfg.validate();
  if (traj.inner_steps < 1) throw std::invalid_argument("trajectory: inner steps must be >= 1");
  const Eigen::Index k = ch.H.rows();
  const Eigen::Index n = ch.H.cols();
  const Eigen::Index m = ch.G.cols();
  if (theta_init.size() != n) throw std::invalid_argument("trajectory: theta size mismatch");
  if (x_init.X.rows() != k || x_init.X.cols() != k)
    throw std::invalid_argument("trajectory: X must be K x K");
  if (x_star_in.X.rows() != k || x_star_in.X.cols() != k)
    throw std::invalid_argument("trajectory: inherited X must be K x K");
  if (params_tn.input_dim() != n || params_tn.output_dim() != n)
    throw std::invalid_argument("trajectory: TN dims must equal N");
  if (params_pn.input_dim() != 2 * k || params_pn.output_dim() != 2 * k)
    throw std::invalid_argument("trajectory: PN dims must equal 2K");

  const int ni = traj.inner_steps;
  const double lambda = traj.regulator_lambda;
  const double power = cfg.transmit_power_w;

  // ---- TN phase: theta optimized from its start, inherited W fixed ----
  const double t_tn0 = now_seconds();
  std::vector<TnStepCache> tn_steps(static_cast<std::size_t>(ni));
  RVec theta = theta_init.theta;
  for (int i = 0; i < ni; ++i) {
    auto& st = tn_steps[static_cast<std::size_t>(i)];
    if (traj.replay) {
      st.gth = traj.replay->theta_grads.at(static_cast<std::size_t>(i));
    } else {
      st.gth = sysmetrics::grad_theta_compressed(x_star_in, PhaseVector(theta), ch, cfg);
    }
    if (traj.capture) traj.capture->theta_grads.push_back(st.gth);
    check_finite(st.gth, "tn_gradient_input");
    const RVec out = forward_ws(params_tn, normalize_input(st.gth, kTnInputScale), st.ws);
    check_finite(out, "tn_forward");
    st.sig.resize(out.size());
    for (Eigen::Index j = 0; j < out.size(); ++j) st.sig(j) = sigmoid(out(j));
    const RVec delta = regulator(out, RegulatorSpec{lambda});
    theta += delta;
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta(j) = wrap_angle(theta(j));
    if (traj.probe) {
      traj.probe->regulator_min.push_back(delta.minCoeff());
      traj.probe->regulator_max.push_back(delta.maxCoeff());
      double dev = 0.0;
      for (Eigen::Index j = 0; j < theta.size(); ++j)
        dev = std::max(dev, std::abs(std::abs(std::polar(1.0, theta(j))) - 1.0));
      traj.probe->unit_modulus_dev.push_back(dev);
    }
  }
  const PhaseVector theta_star(theta);
  const CVec u = theta_star.unit_diag();
  const double t_tn1 = now_seconds();

  // Cascaded channel at the optimized phases.
  CMat ht = ch.H;
  for (Eigen::Index c = 0; c < n; ++c) ht.col(c) *= u(c);
  const CMat Hc = ht * ch.G;
  check_finite(Hc, "cascaded");

  // ---- PN phase: X optimized from its start, theta* fixed ----
  std::vector<PnStepCache> pn_steps(static_cast<std::size_t>(ni));
  CMat x = x_init.X;
  for (int i = 0; i < ni; ++i) {
    auto& st = pn_steps[static_cast<std::size_t>(i)];
    if (traj.replay) {
      st.gx = traj.replay->x_grads.at(static_cast<std::size_t>(i));
    } else {
      const CMat w_cur = Hc.adjoint() * x;
      st.gx = Hc * sysmetrics::grad_w(w_cur, Hc, cfg);
    }
    if (traj.capture) traj.capture->x_grads.push_back(st.gx);
    check_finite(st.gx, "pn_gradient_input");

    const CMat gx_in = normalize_input(st.gx);
    st.col_ws.resize(static_cast<std::size_t>(k));
    st.delta_x.resize(k, k);
    for (Eigen::Index col = 0; col < k; ++col) {
      RVec in(2 * k);
      in.head(k) = gx_in.col(col).real();
      in.tail(k) = gx_in.col(col).imag();
      const RVec out = forward_ws(params_pn, in, st.col_ws[static_cast<std::size_t>(col)]);
      for (Eigen::Index r = 0; r < k; ++r)
        st.delta_x(r, col) = Complex(out(r), out(k + r));
    }
    check_finite(st.delta_x, "pn_forward");

    st.x_prime = x + st.delta_x;
    st.w_tilde = Hc.adjoint() * st.x_prime;
    st.pw = st.w_tilde.squaredNorm();
    if (!(st.pw > 0.0)) throw std::domain_error("trajectory: zero recovered power in PN step");
    st.scale = std::sqrt(power / st.pw);
    st.x_next = st.scale * st.x_prime;
    x = st.x_next;
    if (traj.probe) {
      const double ratio = (Hc.adjoint() * x).squaredNorm() / power;
      traj.probe->power_ratio.push_back(ratio);
    }
  }

  const CMat w_out = Hc.adjoint() * x;
  check_finite(w_out, "recovery");
  const CMat S = Hc * w_out;
  RVec total, interf;
  const double se = rate_from_signals(S, cfg, total, interf);
  if (!std::isfinite(se)) stage_fail("rate");

  TrajectoryResult res;
  res.se = se;
  res.loss = -se;
  res.theta_star = theta_star;
  res.x_star = CompressedPrecoder{x};
  res.w_star = Precoder{w_out};
  const double t_pn1 = now_seconds();
  res.seconds_tn = t_tn1 - t_tn0;
  res.seconds_pn = t_pn1 - t_tn1;

  if (!want_grads) return res;

  res.pn_grad = params_pn.zeros_like();
  res.tn_grad = params_tn.zeros_like();

  // The phases also enter the first PN step's gradient input through the
  // cascade; that path is differentiable in closed form when the inner
  // loop is a single step.
  const bool through_inputs = !traj.detach_inputs && ni == 1 && traj.replay == nullptr;

  // ---- Backward. Complex cotangents use the doubled convention. ----
  const CMat s_bar = rate_backward(S, cfg, total, interf, /*r_bar=*/-1.0);

  // S = Hc * w_out
  CMat hc_bar = s_bar * w_out.adjoint();
  CMat w_out_bar = Hc.adjoint() * s_bar;

  // w_out = Hc^H x
  CMat x_bar = Hc * w_out_bar;
  hc_bar += x * w_out_bar.adjoint();

  for (int i = ni - 1; i >= 0; --i) {
    auto& st = pn_steps[static_cast<std::size_t>(i)];
    // x_next = scale * x_prime
    double scale_bar = (x_bar.cwiseProduct(st.x_prime.conjugate())).sum().real();
    CMat xp_bar = st.scale * x_bar;
    // scale = sqrt(P/pw) => d(scale)/d(pw) = -scale / (2 pw)
    const double pw_bar = scale_bar * (-st.scale / (2.0 * st.pw));
    // pw = ||w_tilde||^2
    const CMat wt_bar = (2.0 * pw_bar) * st.w_tilde;
    // w_tilde = Hc^H x_prime
    xp_bar += Hc * wt_bar;
    hc_bar += st.x_prime * wt_bar.adjoint();
    // x_prime = x_prev + delta_x
    CMat in_bar = CMat::Zero(k, k);
    for (Eigen::Index col = 0; col < k; ++col) {
      RVec up(2 * k);
      up.head(k) = xp_bar.col(col).real();
      up.tail(k) = xp_bar.col(col).imag();
      RVec ig;
      backward_ws(params_pn, st.col_ws[static_cast<std::size_t>(col)], up, res.pn_grad,
                  through_inputs && i == 0 ? &ig : nullptr);
      if (through_inputs && i == 0)
        for (Eigen::Index r = 0; r < k; ++r) in_bar(r, col) = Complex(ig(r), ig(k + r));
    }
    if (through_inputs && i == 0) {
      // gx = 2 A T with A = Hc Hc^H and T = rate_t_matrix(A x0).
      const CMat gx_bar = normalize_input_vjp(st.gx, in_bar);
      const CMat A = Hc * Hc.adjoint();
      const CMat s_sig = A * x_init.X;
      const CMat T = sysmetrics::rate_t_matrix(s_sig, cfg);
      CMat a_bar = 2.0 * gx_bar * T.adjoint();
      const CMat t_bar = 2.0 * A.adjoint() * gx_bar;
      const CMat sig_bar = sysmetrics::rate_t_matrix_vjp(s_sig, cfg, t_bar);
      a_bar += sig_bar * x_init.X.adjoint();
      hc_bar += (a_bar + a_bar.adjoint()) * Hc;
    }
    x_bar = std::move(xp_bar);  // cotangent of x_prev
  }

  // Hc = (H . diag(u)) G
  const CMat ht_bar = hc_bar * ch.G.adjoint();
  // ht(:, c) = H(:, c) * u_c
  RVec theta_bar(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const Complex u_bar = (ht_bar.col(c).cwiseProduct(ch.H.col(c).conjugate())).sum();
    theta_bar(c) = std::imag(u_bar * std::conj(u(c)));
  }
  const double t_bwd_pn = now_seconds();
  res.seconds_pn += t_bwd_pn - t_pn1;

  for (int i = ni - 1; i >= 0; --i) {
    auto& st = tn_steps[static_cast<std::size_t>(i)];
    // theta_i = theta_{i-1} + lambda * sigmoid(out); wrap is gradient-transparent
    RVec out_bar(st.sig.size());
    for (Eigen::Index j = 0; j < out_bar.size(); ++j)
      out_bar(j) = theta_bar(j) * lambda * st.sig(j) * (1.0 - st.sig(j));
    backward_ws(params_tn, st.ws, out_bar, res.tn_grad, nullptr);
    // theta_bar flows unchanged to the previous step
  }
  res.seconds_tn += now_seconds() - t_bwd_pn;

  return res;
}

TrajectoryResult trajectory_grads(const ChannelPair& ch, const PhaseVector& theta_init,
                                  const CompressedPrecoder& x_init,
                                  const CompressedPrecoder& x_star_in, const MlpParams& params_pn,
                                  const MlpParams& params_tn, const SystemConfig& cfg,
                                  const TrajectoryConfig& traj) {
  return trajectory_grads_impl(ch, theta_init, x_init, x_star_in, params_pn, params_tn, cfg, traj,
                               /*want_grads=*/true);
}

TrajectoryResult trajectory_forward(const ChannelPair& ch, const PhaseVector& theta_init,
                                    const CompressedPrecoder& x_init,
                                    const CompressedPrecoder& x_star_in,
                                    const MlpParams& params_pn, const MlpParams& params_tn,
                                    const SystemConfig& cfg, const TrajectoryConfig& traj) {
  return trajectory_grads_impl(ch, theta_init, x_init, x_star_in, params_pn, params_tn, cfg, traj,
                               /*want_grads=*/false);
}

}  // namespace risopt::neural
