// SPDX-License-Identifier: Apache-2.0

#include "risopt/baselines.hpp"

#include <stdexcept>

namespace risopt::baselines {

namespace {

constexpr double kLn2 = 0.6931471805599453;

/// Total transmit power of the dual-regularized precoder update as a
/// function of lambda, from the eigendecomposition of
/// B = sum_i c_i b_i^H b_i: each column is rhs_k (mu + lambda)^-1 r_k in
/// the eigenbasis.
double power_at_dual(const RVec& mu, const CMat& r, const CVec& rhs, double lambda,
                     double mu_floor) {
  double pw = 0.0;
  for (Eigen::Index k = 0; k < r.cols(); ++k) {
    double col = 0.0;
    for (Eigen::Index m = 0; m < r.rows(); ++m) {
      const double d = mu(m) + lambda;
      if (d <= mu_floor) continue;  // pseudo-inverse behavior at lambda = 0
      col += std::norm(r(m, k)) / (d * d);
    }
    pw += std::norm(rhs(k)) * col;
  }
  return pw;
}

}  // namespace

WmmseResult wmmse(const CMat& Hc, const SystemConfig& cfg, const WmmseOptions& opts) {
  cfg.validate();
  const Eigen::Index k = Hc.rows();
  const Eigen::Index m = Hc.cols();
  if (k < 1 || m < 1) throw std::invalid_argument("wmmse: empty cascaded channel");
  if (!(Hc.squaredNorm() > 0.0)) throw std::domain_error("wmmse: all-zero cascaded channel");

  const double power = cfg.transmit_power_w;
  const double s2 = cfg.noise_power_w;

  // Matched-filter start at equal per-user power.
  CMat W(m, k);
  for (Eigen::Index uk = 0; uk < k; ++uk) {
    const double rn = Hc.row(uk).norm();
    if (rn > 0.0)
      W.col(uk) = std::sqrt(power / static_cast<double>(k)) * Hc.row(uk).adjoint() / rn;
    else
      W.col(uk).setZero();
  }

  WmmseResult res;
  res.rx_scalars = CVec::Zero(k);
  res.mse_weights = RVec::Ones(k);
  res.se_trace.push_back(sysmetrics::se_from_cascaded(Hc, W, cfg));

  for (int it = 0; it < opts.max_iter; ++it) {
    const CMat S = Hc * W;

    // Receiver scalars and MSE weights at the current precoder.
    CVec u(k);
    RVec omega(k);
    RVec c(k);    // omega_k * Omega_k * |u_k|^2
    CVec rhs(k);  // omega_k * Omega_k * u_k
    for (Eigen::Index i = 0; i < k; ++i) {
      const double total = s2 + S.row(i).squaredNorm();
      u(i) = S(i, i) / total;
      const double mse = 1.0 - std::norm(S(i, i)) / total;
      omega(i) = 1.0 / mse;
      const double wk = cfg.weight(static_cast<int>(i));
      c(i) = wk * omega(i) * std::norm(u(i));
      rhs(i) = wk * omega(i) * u(i);
    }

    // B = Hc^H diag(c) Hc, positive semidefinite of rank <= K.
    CMat B = CMat::Zero(m, m);
    for (Eigen::Index i = 0; i < k; ++i)
      B.noalias() += c(i) * (Hc.row(i).adjoint() * Hc.row(i));
    Eigen::SelfAdjointEigenSolver<CMat> es(B);
    if (es.info() != Eigen::Success) throw std::runtime_error("wmmse: eigendecomposition failed");
    const RVec mu = es.eigenvalues().cwiseMax(0.0);
    const CMat r = es.eigenvectors().adjoint() * Hc.adjoint();  // column k: Q^H b_k^H

    const double mu_floor = 1e-12 * std::max(mu.maxCoeff(), 0.0);
    double lambda = 0.0;
    if (power_at_dual(mu, r, rhs, 0.0, mu_floor) > power) {
      // Bracket [0, hi] by doubling, then bisect on the power ratio.
      double hi = 1.0;
      while (power_at_dual(mu, r, rhs, hi, 0.0) > power) {
        hi *= 2.0;
        if (!std::isfinite(hi)) throw std::runtime_error("wmmse: dual bracket failure");
      }
      // Bisect to interval exhaustion; the power match ends up far inside
      // the 1e-10 ratio tolerance.
      double lo = 0.0;
      for (int b = 0; b < 200; ++b) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double pw = power_at_dual(mu, r, rhs, mid, 0.0);
        if (pw > power)
          lo = mid;
        else
          hi = mid;
      }
      lambda = 0.5 * (lo + hi);
    }

    // w_k = rhs_k (lambda I + B)^-1 b_k^H, assembled in the eigenbasis.
    for (Eigen::Index uk = 0; uk < k; ++uk) {
      CVec scaled(m);
      for (Eigen::Index i = 0; i < m; ++i) {
        const double d = mu(i) + lambda;
        scaled(i) = d > mu_floor ? r(i, uk) / d : Complex(0.0, 0.0);
      }
      W.col(uk) = rhs(uk) * (es.eigenvectors() * scaled);
    }

    res.rx_scalars = u;
    res.mse_weights = omega;
    res.dual = lambda;

    const double se = sysmetrics::se_from_cascaded(Hc, W, cfg);
    const double se_prev = res.se_trace.back();
    res.se_trace.push_back(se);
    if (std::abs(se - se_prev) <= opts.tol * std::abs(se_prev)) {
      res.converged = true;
      break;
    }
  }

  res.w = Precoder{std::move(W)};
  return res;
}

CVec rcg_euclidean_grad(const Precoder& w, const PhaseVector& theta, const ChannelPair& ch,
                        const SystemConfig& cfg) {
  const Eigen::Index k = ch.H.rows();
  const Eigen::Index n = ch.H.cols();
  const double s2 = cfg.noise_power_w;
  const CVec u = theta.unit_diag();
  const CMat B = ch.G * w.W;  // N x K

  CVec g = CVec::Zero(n);
  for (Eigen::Index uk = 0; uk < k; ++uk) {
    CMat a = B;  // a(:, i) = diag(h_k^H) G w_i
    for (Eigen::Index r = 0; r < n; ++r) a.row(r) *= ch.H(uk, r);
    const CVec s = (u.transpose() * a).transpose();
    const double total = s2 + s.squaredNorm();
    const double interf = total - std::norm(s(uk));
    const CVec m_all = a.conjugate() * s;
    const CVec m_other = m_all - a.col(uk).conjugate() * s(uk);
    g += (2.0 * cfg.weight(static_cast<int>(uk)) / kLn2) * (m_all / total - m_other / interf);
  }
  return g;
}

CVec rcg_project_tangent(const CVec& grad, const CVec& u) {
  CVec out(grad.size());
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    const double radial = std::real(grad(i) * std::conj(u(i)));
    out(i) = grad(i) - radial * u(i);
  }
  return out;
}

RcgResult rcg_theta(const Precoder& w, const PhaseVector& theta_start, const ChannelPair& ch,
                    const SystemConfig& cfg, const RcgOptions& opts) {
  cfg.validate();
  const Eigen::Index n = ch.H.cols();
  const Eigen::Index k = ch.H.rows();
  const double s2 = cfg.noise_power_w;

  // Effective per-user vectors a_{i,k}; SE depends on theta only through
  // s_{ik} = u^T a_{i,k}.
  const CMat B = ch.G * w.W;
  std::vector<CMat> a(static_cast<std::size_t>(k));
  for (Eigen::Index uk = 0; uk < k; ++uk) {
    a[static_cast<std::size_t>(uk)] = B;
    for (Eigen::Index r = 0; r < n; ++r) a[static_cast<std::size_t>(uk)].row(r) *= ch.H(uk, r);
  }

  auto se_at = [&](const CVec& u) {
    double rate = 0.0;
    for (Eigen::Index uk = 0; uk < k; ++uk) {
      const CVec s = (u.transpose() * a[static_cast<std::size_t>(uk)]).transpose();
      double sig = 0.0, cross = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) {
        const double p = std::norm(s(j));
        if (j == uk)
          sig = p;
        else
          cross += p;
      }
      rate += cfg.weight(static_cast<int>(uk)) * std::log1p(sig / (s2 + cross)) / kLn2;
    }
    return rate;
  };
  auto egrad_at = [&](const CVec& u) {
    CVec g = CVec::Zero(n);
    for (Eigen::Index uk = 0; uk < k; ++uk) {
      const CMat& ak = a[static_cast<std::size_t>(uk)];
      const CVec s = (u.transpose() * ak).transpose();
      const double total = s2 + s.squaredNorm();
      const double interf = total - std::norm(s(uk));
      const CVec m_all = ak.conjugate() * s;
      const CVec m_other = m_all - ak.col(uk).conjugate() * s(uk);
      g += (2.0 * cfg.weight(static_cast<int>(uk)) / kLn2) * (m_all / total - m_other / interf);
    }
    return g;
  };
  auto retract = [](const CVec& v) {
    CVec out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double mag = std::abs(v(i));
      out(i) = mag > 0.0 ? v(i) / mag : Complex(1.0, 0.0);
    }
    return out;
  };

  CVec u = theta_start.unit_diag();
  double f = se_at(u);

  RcgResult res;
  res.se_trace.push_back(f);

  CVec grad = rcg_project_tangent(egrad_at(u), u);
  CVec dir = grad;
  double t_start = opts.armijo_step0;

  for (int it = 0; it < opts.iters; ++it) {
    const double gnorm = grad.norm();
    if (!(gnorm > 0.0)) break;

    // Ascent check; fall back to steepest ascent when conjugacy degrades.
    double slope = std::real(grad.dot(dir));
    if (!(slope > 0.0)) {
      dir = grad;
      slope = gnorm * gnorm;
    }

    // Backtracking on a direction normalized to per-element scale so the
    // step is scale-free; later searches warm-start from the last accepted
    // step (capped by the configured initial step).
    const CVec dhat = (std::sqrt(static_cast<double>(n)) / dir.norm()) * dir;
    const double dslope = std::real(grad.dot(dhat));
    double t = t_start;
    bool accepted = false;
    CVec u_next;
    double f_next = f;
    for (int bt = 0; bt <= opts.max_backtracks; ++bt) {
      u_next = retract(u + t * dhat);
      f_next = se_at(u_next);
      if (f_next >= f + opts.armijo_c * t * dslope) {
        accepted = true;
        break;
      }
      t *= opts.armijo_shrink;
    }
    if (!accepted) {
      res.stalled = true;
      break;
    }
    t_start = std::min(opts.armijo_step0, 4.0 * t);

    const CVec grad_new_e = egrad_at(u_next);
    const CVec grad_new = rcg_project_tangent(grad_new_e, u_next);

    // Polak-Ribiere with nonnegativity clamp; previous quantities are
    // transported by tangent projection at the new point.
    const CVec grad_prev_t = rcg_project_tangent(grad, u_next);
    const CVec dir_t = rcg_project_tangent(dir, u_next);
    const double denom = std::real(grad.dot(grad));
    double beta = 0.0;
    if (denom > 0.0)
      beta = std::max(0.0, std::real(grad_new.dot(grad_new - grad_prev_t)) / denom);

    u = u_next;
    f = f_next;
    grad = grad_new;
    dir = grad + beta * dir_t;
    res.se_trace.push_back(f);
  }

  RVec angles(n);
  for (Eigen::Index i = 0; i < n; ++i) angles(i) = std::arg(u(i));
  res.theta = PhaseVector(std::move(angles));
  return res;
}

AoResult ao(const ChannelPair& ch, const SystemConfig& cfg, Rng& rng, const AoOptions& opts) {
  cfg.validate();
  AoResult res;
  res.theta =
      opts.theta_init ? *opts.theta_init : sysmetrics::random_phases(cfg.num_ris_elements, rng);

  CMat hc = sysmetrics::cascaded(ch, res.theta).Hc;
  WmmseResult wm = wmmse(hc, cfg, opts.wmmse);
  res.w = wm.w;
  double se = sysmetrics::se_from_cascaded(hc, res.w.W, cfg);
  res.se_trace.push_back(se);

  for (int outer = 0; outer < opts.max_outer; ++outer) {
    res.outer_loops = outer + 1;
    if (opts.rcg.iters > 0) {
      RcgResult rc = rcg_theta(res.w, res.theta, ch, cfg, opts.rcg);
      res.theta = rc.theta;
    }
    hc = sysmetrics::cascaded(ch, res.theta).Hc;
    wm = wmmse(hc, cfg, opts.wmmse);
    res.w = wm.w;
    const double se_next = sysmetrics::se_from_cascaded(hc, res.w.W, cfg);
    res.se_trace.push_back(se_next);
    const double gain = se_next - se;
    se = se_next;
    if (gain <= opts.outer_tol * std::abs(se)) break;
  }
  res.se = se;
  return res;
}

RandomPhaseResult random_phase(const ChannelPair& ch, const SystemConfig& cfg, Rng& rng,
                               const WmmseOptions& opts) {
  cfg.validate();
  RandomPhaseResult res;
  res.theta = sysmetrics::random_phases(cfg.num_ris_elements, rng);
  const CMat hc = sysmetrics::cascaded(ch, res.theta).Hc;
  res.w = wmmse(hc, cfg, opts).w;
  res.se = sysmetrics::se_from_cascaded(hc, res.w.W, cfg);
  return res;
}

double upper_bound_proxy(const ChannelPair& ch, const SystemConfig& cfg, int restarts,
                         std::uint64_t base_seed, const AoOptions& opts) {
  if (restarts < 1) throw std::invalid_argument("upper_bound_proxy: need at least one restart");
  double best = 0.0;
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(base_seed, static_cast<double>(r), static_cast<std::uint64_t>(r)));
    const AoResult res = ao(ch, cfg, rng, opts);
    best = std::max(best, res.se);
  }
  return best;
}

}  // namespace risopt::baselines
