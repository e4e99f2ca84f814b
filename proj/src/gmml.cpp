// SPDX-License-Identifier: Apache-2.0

#include "risopt/gmml.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace risopt::gmml {

namespace {

constexpr double kLn2 = 0.6931471805599453;

// Input RMS for the full-precoder (W-space) network family.
constexpr double kWspaceInputScale = 1.0;

// Matches the theta-network input scale of the manifold trajectory.
constexpr double kTnInnerScale = 1.0;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::Gmml: return "GMML";
    case Mode::Gml: return "GML";
    case Mode::Ml: return "ML";
  }
  return "?";
}

void GmmlHyper::validate() const {
  if (epochs < 1 || outer_steps < 1 || inner_steps < 1)
    throw std::invalid_argument("hyper: iteration counts must be >= 1");
  if (!(lr_x > 0.0) || !(lr_theta > 0.0))
    throw std::invalid_argument("hyper: learning rates must be > 0");
  if (!(regulator_lambda > 0.0)) throw std::invalid_argument("hyper: lambda must be > 0");
  if (tn_update_interval < 1) throw std::invalid_argument("hyper: n_0 must be >= 1");
  if (hidden_neurons < 1 || hidden_layers < 1)
    throw std::invalid_argument("hyper: network shape must be >= 1");
}

int pn_input_dim(Mode mode, const SystemConfig& cfg) {
  return mode == Mode::Gmml ? 2 * cfg.num_users : 2 * cfg.num_bs_antennas;
}

int tn_input_dim(const SystemConfig& cfg) { return cfg.num_ris_elements; }

PhaseVector tn_inner(const PhaseVector& theta_start, const CompressedPrecoder& x_star,
                     const ChannelPair& ch, const SystemConfig& cfg, const MlpParams& params_tn,
                     const neural::RegulatorSpec& spec, int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("tn_inner: need at least one step");
  RVec theta = theta_start.theta;
  for (int i = 0; i < n_steps; ++i) {
    const RVec g = sysmetrics::grad_theta_compressed(x_star, PhaseVector(theta), ch, cfg);
    const RVec out = neural::mlp_forward(params_tn, neural::normalize_input(g, kTnInnerScale));
    const RVec delta = neural::regulator(out, spec);
    theta += delta;
    for (Eigen::Index j = 0; j < theta.size(); ++j) theta(j) = wrap_angle(theta(j));
  }
  return PhaseVector(theta);
}

PnInnerResult pn_inner(const CompressedPrecoder& x_start, const PhaseVector& theta_star,
                       const ChannelPair& ch, const SystemConfig& cfg, const MlpParams& params_pn,
                       int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("pn_inner: need at least one step");
  const CMat Hc = sysmetrics::cascaded(ch, theta_star).Hc;
  const Eigen::Index k = Hc.rows();
  CMat x = x_start.X;
  for (int i = 0; i < n_steps; ++i) {
    const CMat w_cur = Hc.adjoint() * x;
    const CMat gx = neural::normalize_input(CMat(Hc * sysmetrics::grad_w(w_cur, Hc, cfg)));
    CMat delta(k, k);
    for (Eigen::Index col = 0; col < k; ++col) {
      RVec in(2 * k);
      in.head(k) = gx.col(col).real();
      in.tail(k) = gx.col(col).imag();
      const RVec out = neural::mlp_forward(params_pn, in);
      for (Eigen::Index r = 0; r < k; ++r) delta(r, col) = Complex(out(r), out(k + r));
    }
    x += delta;
    x = sysmetrics::normalize_power(CompressedPrecoder{x}, Hc, cfg.transmit_power_w).X;
  }
  PnInnerResult res;
  res.x = CompressedPrecoder{x};
  res.w = sysmetrics::recover_w(Hc, res.x);
  return res;
}

namespace {

using neural::MlpBackwardResult;
using neural::TrajectoryConfig;
using neural::TrajectoryResult;

}  // namespace

/// GML feeds per-column rate gradients to the precoding network; ML (no
/// gradient mechanism) feeds the current state instead: each user's
/// effective cascaded channel to the precoding network and the current
/// angles to the theta network. The theta half otherwise matches the
/// manifold trajectory.
TrajectoryResult variant_trajectory_grads(const ChannelPair& ch, const PhaseVector& theta_init,
                                          const CMat& w_init, const Precoder& w_star_in,
                                          const MlpParams& params_pn, const MlpParams& params_tn,
                                          const SystemConfig& cfg, const TrajectoryConfig& traj,
                                          bool iterate_inputs, bool want_grads) {
  cfg.validate();
  if (traj.inner_steps < 1) throw std::invalid_argument("trajectory: inner steps must be >= 1");
  const Eigen::Index k = ch.H.rows();
  const Eigen::Index n = ch.H.cols();
  const Eigen::Index m = ch.G.cols();
  if (params_pn.input_dim() != 2 * m || params_pn.output_dim() != 2 * m)
    throw std::invalid_argument("trajectory: PN dims must equal 2M for W-space modes");
  if (params_tn.input_dim() != n || params_tn.output_dim() != n)
    throw std::invalid_argument("trajectory: TN dims must equal N");

  const int ni = traj.inner_steps;
  const double lambda = traj.regulator_lambda;
  const double power = cfg.transmit_power_w;

  // TN phase (forward); keep what the backward pass needs.
  const double t_tn0 = now_seconds();
  std::vector<RVec> tn_inputs(static_cast<std::size_t>(ni));
  std::vector<RVec> tn_sig(static_cast<std::size_t>(ni));
  RVec theta = theta_init.theta;
  std::vector<RVec> tn_theta_at(static_cast<std::size_t>(ni));
  for (int i = 0; i < ni; ++i) {
    tn_theta_at[static_cast<std::size_t>(i)] = theta;
    RVec g;
    if (traj.replay) {
      g = traj.replay->theta_grads.at(static_cast<std::size_t>(i));
    } else if (iterate_inputs) {
      g = theta;  // current iterate, fed unpreprocessed
    } else {
      g = sysmetrics::grad_theta(w_star_in, PhaseVector(theta), ch, cfg);
    }
    if (traj.capture) traj.capture->theta_grads.push_back(g);
    tn_inputs[static_cast<std::size_t>(i)] =
        iterate_inputs ? g : neural::normalize_input(g, kWspaceInputScale);
    const RVec out = neural::mlp_forward(params_tn, tn_inputs[static_cast<std::size_t>(i)]);
    RVec sig(out.size());
    for (Eigen::Index j = 0; j < out.size(); ++j) sig(j) = sigmoid(out(j));
    tn_sig[static_cast<std::size_t>(i)] = sig;
    const RVec delta = neural::regulator(out, neural::RegulatorSpec{lambda});
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
  const double t_tn1 = now_seconds();
  const CMat Hc = sysmetrics::cascaded(ch, theta_star).Hc;

  // PN phase on the full precoder.
  struct PnStep {
    CMat raw;      // network input before preprocessing
    CMat input;    // preprocessed network input
    CMat delta;
    CMat w_prime;
    double pw = 0.0;
    double scale = 0.0;
  };
  std::vector<PnStep> steps(static_cast<std::size_t>(ni));
  CMat w = w_init;
  for (int i = 0; i < ni; ++i) {
    auto& st = steps[static_cast<std::size_t>(i)];
    if (traj.replay) {
      st.raw = traj.replay->x_grads.at(static_cast<std::size_t>(i));
    } else if (iterate_inputs) {
      st.raw = w;  // current iterate, fed unpreprocessed
    } else {
      st.raw = sysmetrics::grad_w(w, Hc, cfg);
    }
    if (traj.capture) traj.capture->x_grads.push_back(st.raw);
    st.input = iterate_inputs ? st.raw : neural::normalize_input(st.raw, kWspaceInputScale);

    st.delta.resize(m, k);
    for (Eigen::Index col = 0; col < k; ++col) {
      RVec in(2 * m);
      in.head(m) = st.input.col(col).real();
      in.tail(m) = st.input.col(col).imag();
      const RVec out = neural::mlp_forward(params_pn, in);
      for (Eigen::Index r = 0; r < m; ++r) st.delta(r, col) = Complex(out(r), out(m + r));
    }
    st.w_prime = w + st.delta;
    st.pw = st.w_prime.squaredNorm();
    if (!(st.pw > 0.0)) throw std::domain_error("trajectory: zero precoder power");
    st.scale = std::sqrt(power / st.pw);
    w = st.scale * st.w_prime;
    if (traj.probe) traj.probe->power_ratio.push_back(w.squaredNorm() / power);
  }

  const CMat S = Hc * w;
  const double s2 = cfg.noise_power_w;
  RVec total(k), interf(k);
  double se = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    double sig = 0.0, cross = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double p = std::norm(S(i, j));
      if (j == i)
        sig = p;
      else
        cross += p;
    }
    interf(i) = s2 + cross;
    total(i) = interf(i) + sig;
    se += cfg.weight(static_cast<int>(i)) * std::log1p(sig / interf(i)) / kLn2;
  }
  if (!std::isfinite(se)) throw std::runtime_error("trajectory: non-finite rate");

  TrajectoryResult res;
  res.se = se;
  res.loss = -se;
  res.theta_star = theta_star;
  res.w_star = Precoder{w};
  res.seconds_tn = t_tn1 - t_tn0;
  res.seconds_pn = now_seconds() - t_tn1;

  if (!want_grads) return res;
  res.pn_grad = params_pn.zeros_like();
  res.tn_grad = params_tn.zeros_like();

  // GML's first gradient input depends on the phases through the cascade;
  // that path is differentiated when the inner loop is a single step.
  // (ML's inputs are the reset iterates, which are constants.)
  const bool through_inputs =
      !traj.detach_inputs && ni == 1 && traj.replay == nullptr && !iterate_inputs;

  // Backward; complex cotangents in the doubled convention.
  CMat s_bar(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double wi = cfg.weight(static_cast<int>(i)) / kLn2;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double c = 1.0 / total(i) - (i == j ? 0.0 : 1.0 / interf(i));
      s_bar(i, j) = -2.0 * wi * c * S(i, j);
    }
  }
  CMat hc_bar = s_bar * w.adjoint();
  CMat w_bar = Hc.adjoint() * s_bar;

  for (int i = ni - 1; i >= 0; --i) {
    auto& st = steps[static_cast<std::size_t>(i)];
    const double scale_bar = (w_bar.cwiseProduct(st.w_prime.conjugate())).sum().real();
    CMat wp_bar = st.scale * w_bar;
    const double pw_bar = scale_bar * (-st.scale / (2.0 * st.pw));
    wp_bar += (2.0 * pw_bar) * st.w_prime;
    CMat in_bar = CMat::Zero(m, k);
    for (Eigen::Index col = 0; col < k; ++col) {
      RVec up(2 * m);
      up.head(m) = wp_bar.col(col).real();
      up.tail(m) = wp_bar.col(col).imag();
      RVec in(2 * m);
      in.head(m) = st.input.col(col).real();
      in.tail(m) = st.input.col(col).imag();
      MlpBackwardResult br = neural::mlp_backward(params_pn, in, up);
      res.pn_grad.accumulate(br.param_grads);
      if (through_inputs && i == 0)
        for (Eigen::Index r = 0; r < m; ++r)
          in_bar(r, col) = Complex(br.input_grad(r), br.input_grad(m + r));
    }
    if (through_inputs && i == 0) {
      // gw = 2 Hc^H T with T = rate_t_matrix(Hc w_init).
      const CMat gw_bar = neural::normalize_input_vjp(st.raw, in_bar, kWspaceInputScale);
      const CMat s_sig = Hc * w_init;
      const CMat T = sysmetrics::rate_t_matrix(s_sig, cfg);
      hc_bar += 2.0 * T * gw_bar.adjoint();
      const CMat t_bar = 2.0 * Hc * gw_bar;
      const CMat sig_bar = sysmetrics::rate_t_matrix_vjp(s_sig, cfg, t_bar);
      hc_bar += sig_bar * w_init.adjoint();
    }
    w_bar = std::move(wp_bar);
  }

  // Hc = (H . diag(u)) G; theta* receives the SE path only.
  const CVec u = theta_star.unit_diag();
  const CMat ht_bar = hc_bar * ch.G.adjoint();
  RVec theta_bar(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const Complex u_bar = (ht_bar.col(c).cwiseProduct(ch.H.col(c).conjugate())).sum();
    theta_bar(c) = std::imag(u_bar * std::conj(u(c)));
  }
  for (int i = ni - 1; i >= 0; --i) {
    RVec out_bar(n);
    const RVec& sig = tn_sig[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j)
      out_bar(j) = theta_bar(j) * lambda * sig(j) * (1.0 - sig(j));
    MlpBackwardResult br = neural::mlp_backward(params_tn, tn_inputs[static_cast<std::size_t>(i)], out_bar);
    res.tn_grad.accumulate(br.param_grads);
  }
  return res;
}

InitialState draw_initial_state(const SystemConfig& cfg, const GmmlHyper& hyper, Rng& rng) {
  cfg.validate();
  hyper.validate();
  InitialState init;
  init.theta0 = sysmetrics::random_phases(cfg.num_ris_elements, rng);
  if (hyper.mode == Mode::Gmml) {
    init.x0_unnormalized =
        CompressedPrecoder{rng.cgaussian_matrix(cfg.num_users, cfg.num_users)};
  } else {
    init.x0_unnormalized =
        CompressedPrecoder{rng.cgaussian_matrix(cfg.num_bs_antennas, cfg.num_users)};
  }
  const int pn_dim = pn_input_dim(hyper.mode, cfg);
  init.pn = neural::make_mlp(pn_dim, hyper.hidden_neurons, pn_dim, hyper.hidden_layers, rng);
  const int tn_dim = tn_input_dim(cfg);
  init.tn = neural::make_mlp(tn_dim, hyper.hidden_neurons, tn_dim, hyper.hidden_layers, rng);
  return init;
}

RunTrace run_from_state(const ChannelPair& channel_design, const ChannelPair& channel_eval,
                        const SystemConfig& cfg, const GmmlHyper& hyper, const InitialState& init,
                        EpochProbe* probe) {
  cfg.validate();
  hyper.validate();
  if (!channel_design.same_dims(channel_eval))
    throw std::invalid_argument("run: design and eval channels must share dimensions");

  const double t_start = now_seconds();
  const bool manifold = hyper.mode == Mode::Gmml;

  // Solver internals run on the rescaled problem; every recorded SE is
  // evaluated in original units on the original channels.
  const sysmetrics::ScaledProblem sp = sysmetrics::rescale_problem(channel_design, cfg);
  const double power = sp.cfg.transmit_power_w;

  const PhaseVector theta0 = init.theta0;
  CMat var0;  // X0 (GMML) or W0 (variants), normalized once at start
  Precoder w_star;                // W-space modes' inherited precoder
  CompressedPrecoder x_inherit;   // manifold mode's inherited compressed precoder
  if (manifold) {
    const CMat hc0 = sysmetrics::cascaded(sp.channel, theta0).Hc;
    var0 = sysmetrics::normalize_power(init.x0_unnormalized, hc0, power).X;
    x_inherit = CompressedPrecoder{var0};
    w_star = sysmetrics::recover_w(hc0, x_inherit);
  } else {
    const double pw = init.x0_unnormalized.X.squaredNorm();
    if (!(pw > 0.0)) throw std::domain_error("run: zero initial precoder");
    var0 = std::sqrt(power / pw) * init.x0_unnormalized.X;
    w_star = Precoder{var0};
  }

  MlpParams pn = init.pn;
  MlpParams tn = init.tn;
  neural::AdamState pn_state = neural::AdamState::zeros_like(pn);
  neural::AdamState tn_state = neural::AdamState::zeros_like(tn);

  RunTrace trace;
  trace.design_se.reserve(static_cast<std::size_t>(hyper.epochs));
  trace.eval_se.reserve(static_cast<std::size_t>(hyper.epochs));
  trace.best_se.reserve(static_cast<std::size_t>(hyper.epochs));
  trace.elapsed_ms.reserve(static_cast<std::size_t>(hyper.epochs));

  double max_se = 0.0;
  Precoder w_opt = sp.to_physical(w_star);
  PhaseVector theta_opt = theta0;

  MlpParams pn_acc = pn.zeros_like();
  MlpParams tn_acc = tn.zeros_like();

  int tn_acc_epochs = 0;
  for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
    pn_acc.set_zero();
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(hyper.outer_steps));
    double design_se_acc = 0.0;
    TrajectoryResult last;

    for (int outer = 0; outer < hyper.outer_steps; ++outer) {
      if (probe) {
        probe->outer_theta_start.push_back(theta0.theta);
        probe->outer_x_start.push_back(var0);
      }
      TrajectoryConfig tcfg;
      tcfg.inner_steps = hyper.inner_steps;
      tcfg.regulator_lambda = hyper.regulator_lambda;
      tcfg.probe = probe ? probe->steps : nullptr;

      TrajectoryResult step;
      try {
        if (manifold) {
          step = neural::trajectory_grads(sp.channel, theta0, CompressedPrecoder{var0}, x_inherit,
                                          pn, tn, sp.cfg, tcfg);
        } else {
          step = variant_trajectory_grads(sp.channel, theta0, var0, w_star, pn, tn, sp.cfg, tcfg,
                                          /*iterate_inputs=*/hyper.mode == Mode::Ml,
                                          /*want_grads=*/true);
        }
      } catch (const std::exception& e) {
        throw std::runtime_error("run: epoch " + std::to_string(epoch) + ": " + e.what());
      }

      losses.push_back(step.loss);
      pn_acc.accumulate(step.pn_grad);
      tn_acc.accumulate(step.tn_grad);
      // Inherited by the next outer iteration's theta phase.
      if (manifold)
        x_inherit = step.x_star;
      else
        w_star = step.w_star;

      // MAX recorder, measured on the design channel in original units.
      const Precoder w_phys = sp.to_physical(step.w_star);
      const double se_design =
          sysmetrics::spectral_efficiency(w_phys, step.theta_star, channel_design, cfg);
      design_se_acc += se_design;
      if (se_design > max_se) {
        max_se = se_design;
        w_opt = w_phys;
        theta_opt = step.theta_star;
      }
      trace.seconds_tn += step.seconds_tn;
      trace.seconds_pn += step.seconds_pn;
      last = std::move(step);
    }

    const double inv_no = 1.0 / static_cast<double>(hyper.outer_steps);
    pn_acc.scale(inv_no);
    neural::adam_step(pn_state, pn_acc, pn, hyper.lr_x);
    // TN gradients accumulate across the epochs between its updates.
    ++tn_acc_epochs;
    if (epoch % hyper.tn_update_interval == 0) {
      tn_acc.scale(inv_no / static_cast<double>(tn_acc_epochs));
      neural::adam_step(tn_state, tn_acc, tn, hyper.lr_theta);
      tn_acc.set_zero();
      tn_acc_epochs = 0;
    }

    trace.design_se.push_back(design_se_acc * inv_no);
    trace.eval_se.push_back(sysmetrics::spectral_efficiency(sp.to_physical(last.w_star),
                                                            last.theta_star, channel_eval, cfg));
    trace.best_se.push_back(max_se);
    trace.elapsed_ms.push_back((now_seconds() - t_start) * 1e3);

    if (probe && probe->record_params) {
      probe->pn_per_epoch.push_back(pn);
      probe->tn_per_epoch.push_back(tn);
    }
  }

  trace.max_se = max_se;
  trace.w_opt = w_opt;
  trace.theta_opt = theta_opt;
  trace.eval_se_at_best =
      sysmetrics::spectral_efficiency(w_opt, theta_opt, channel_eval, cfg);
  trace.seconds_total = now_seconds() - t_start;
  return trace;
}

RunTrace run(const ChannelPair& channel_design, const ChannelPair& channel_eval,
             const SystemConfig& cfg, const GmmlHyper& hyper, Rng& rng, EpochProbe* probe) {
  const InitialState init = draw_initial_state(cfg, hyper, rng);
  return run_from_state(channel_design, channel_eval, cfg, hyper, init, probe);
}

void write_trace_csv(const RunTrace& trace, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_trace_csv: cannot open " + path);
  os << "epoch,design_SE,eval_SE,best_SE,elapsed_ms\n";
  char buf[160];
  for (std::size_t e = 0; e < trace.design_se.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g\n", e + 1, trace.design_se[e],
                  trace.eval_se[e], trace.best_se[e], trace.elapsed_ms[e]);
    os << buf;
  }
  if (!os) throw std::runtime_error("write_trace_csv: write failed for " + path);
}

}  // namespace risopt::gmml
