// SPDX-License-Identifier: Apache-2.0

#include "risopt/sysmetrics.hpp"

#include <stdexcept>

namespace risopt::sysmetrics {

namespace {

constexpr double kLn2 = 0.6931471805599453;

void check_dims(const CMat& H, const PhaseVector& theta, const CMat& G) {
  if (H.cols() != theta.size() || G.rows() != theta.size())
    throw std::invalid_argument("cascaded: dimension mismatch between H, theta, G");
}

}  // namespace

PhaseVector::PhaseVector(RVec angles) : theta(std::move(angles)) {
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = wrap_angle(theta(i));
}

CVec PhaseVector::unit_diag() const {
  CVec u(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) u(i) = std::polar(1.0, theta(i));
  return u;
}

PhaseVector random_phases(int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("random_phases: N must be >= 1");
  RVec t(n);
  for (int i = 0; i < n; ++i) t(i) = rng.uniform(0.0, kTwoPi);
  return PhaseVector(std::move(t));
}

CascadedChannel cascaded(const CMat& H, const PhaseVector& theta, const CMat& G) {
  check_dims(H, theta, G);
  const CVec u = theta.unit_diag();
  // Row k: h_k^H diag(u) G.
  CMat ht = H;
  for (Eigen::Index n = 0; n < u.size(); ++n) ht.col(n) *= u(n);
  return CascadedChannel{ht * G};
}

double se_from_cascaded(const CMat& Hc, const CMat& W, const SystemConfig& cfg) {
  if (Hc.cols() != W.rows()) throw std::invalid_argument("se: Hc/W dimension mismatch");
  const Eigen::Index k = Hc.rows();
  if (W.cols() != k) throw std::invalid_argument("se: W must have K columns");
  const double s2 = cfg.noise_power_w;
  const CMat S = Hc * W;
  double rate = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    double sig = 0.0, interf = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double p = std::norm(S(i, j));
      if (j == i)
        sig = p;
      else
        interf += p;
    }
    // log1p keeps relative precision at low SINR.
    rate += cfg.weight(static_cast<int>(i)) * std::log1p(sig / (s2 + interf)) / kLn2;
  }
  return rate;
}

double spectral_efficiency(const Precoder& w, const PhaseVector& theta, const ChannelPair& ch,
                           const SystemConfig& cfg) {
  return se_from_cascaded(cascaded(ch, theta).Hc, w.W, cfg);
}

double se_compressed(const CompressedPrecoder& x, const PhaseVector& theta, const ChannelPair& ch,
                     const SystemConfig& cfg) {
  const CascadedChannel hc = cascaded(ch, theta);
  return se_from_cascaded(hc.Hc, recover_w(hc.Hc, x).W, cfg);
}

CompressedPrecoder normalize_power(const CompressedPrecoder& x, const CMat& Hc,
                                   double total_power) {
  if (Hc.rows() != x.X.rows()) throw std::invalid_argument("normalize_power: dimension mismatch");
  const double pw = (Hc.adjoint() * x.X).squaredNorm();
  if (!(pw > 0.0)) throw std::domain_error("normalize_power: zero recovered power");
  return CompressedPrecoder{std::sqrt(total_power / pw) * x.X};
}

Precoder recover_w(const CMat& Hc, const CompressedPrecoder& x) {
  if (Hc.rows() != x.X.rows()) throw std::invalid_argument("recover_w: dimension mismatch");
  return Precoder{Hc.adjoint() * x.X};
}

CMat rate_t_matrix(const CMat& S, const SystemConfig& cfg) {
  const Eigen::Index k = S.rows();
  const double s2 = cfg.noise_power_w;
  // T(i, j) = w_i/ln2 * S(i, j) * (1/total_i - [i != j]/interf_i)
  CMat T(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double total = s2 + S.row(i).squaredNorm();
    const double interf = total - std::norm(S(i, i));
    const double wi = cfg.weight(static_cast<int>(i));
    for (Eigen::Index j = 0; j < k; ++j) {
      const double c = 1.0 / total - (i == j ? 0.0 : 1.0 / interf);
      T(i, j) = (wi / kLn2) * c * S(i, j);
    }
  }
  return T;
}

CMat rate_t_matrix_vjp(const CMat& S, const SystemConfig& cfg, const CMat& t_bar) {
  const Eigen::Index k = S.rows();
  const double s2 = cfg.noise_power_w;
  CMat s_bar = CMat::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double total = s2 + S.row(i).squaredNorm();
    const double interf = total - std::norm(S(i, i));
    const double wi = cfg.weight(static_cast<int>(i)) / kLn2;
    double total_bar = 0.0;
    double interf_bar = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double c = 1.0 / total - (i == j ? 0.0 : 1.0 / interf);
      s_bar(i, j) += wi * c * t_bar(i, j);
      const double k_bar = (t_bar(i, j) * std::conj(S(i, j))).real();
      total_bar += k_bar * wi * (-1.0 / (total * total));
      if (i != j) interf_bar += k_bar * wi * (1.0 / (interf * interf));
    }
    // interf = total - |S_ii|^2
    total_bar += interf_bar;
    s_bar(i, i) += interf_bar * (-2.0) * S(i, i);
    // total = s2 + sum_j |S_ij|^2
    for (Eigen::Index j = 0; j < k; ++j) s_bar(i, j) += total_bar * 2.0 * S(i, j);
  }
  return s_bar;
}

CMat grad_w(const CMat& W, const CMat& Hc, const SystemConfig& cfg) {
  if (Hc.cols() != W.rows() || Hc.rows() != W.cols())
    throw std::invalid_argument("grad_w: dimension mismatch");
  const CMat S = Hc * W;  // S(i, j) = h_{c,i} w_j
  return 2.0 * (Hc.adjoint() * rate_t_matrix(S, cfg));
}

WirtingerGrad grad_x(const CompressedPrecoder& x, const PhaseVector& theta, const ChannelPair& ch,
                     const SystemConfig& cfg) {
  const CMat Hc = cascaded(ch, theta).Hc;
  const CMat W = Hc.adjoint() * x.X;
  // Chain through W = Hc^H X.
  return WirtingerGrad{Hc * grad_w(W, Hc, cfg)};
}

RVec grad_theta(const Precoder& w, const PhaseVector& theta, const ChannelPair& ch,
                const SystemConfig& cfg) {
  check_dims(ch.H, theta, ch.G);
  const Eigen::Index k = ch.H.rows();
  const Eigen::Index n = ch.H.cols();
  const double s2 = cfg.noise_power_w;
  const CVec u = theta.unit_diag();
  const CMat B = ch.G * w.W;  // N x K

  // c = dR/du* (un-doubled); signal s_{ik} = sum_n H(k,n) u_n B(n,i).
  CVec c = CVec::Zero(n);
  for (Eigen::Index uk = 0; uk < k; ++uk) {
    CMat a = B;  // a(:, i) = diag(h_k^H) G w_i
    for (Eigen::Index r = 0; r < n; ++r) a.row(r) *= ch.H(uk, r);
    const CVec s = (u.transpose() * a).transpose();  // K entries
    const double total = s2 + s.squaredNorm();
    const double interf = total - std::norm(s(uk));
    const CVec m_all = a.conjugate() * s;
    const CVec m_other = m_all - a.col(uk).conjugate() * s(uk);
    c += (cfg.weight(static_cast<int>(uk)) / kLn2) * (m_all / total - m_other / interf);
  }

  RVec g(n);
  for (Eigen::Index i = 0; i < n; ++i) g(i) = 2.0 * std::imag(c(i) * std::conj(u(i)));
  return g;
}

RVec grad_theta_compressed(const CompressedPrecoder& x, const PhaseVector& theta,
                           const ChannelPair& ch, const SystemConfig& cfg) {
  check_dims(ch.H, theta, ch.G);
  const Eigen::Index k = ch.H.rows();
  const Eigen::Index n = ch.H.cols();
  if (x.X.rows() != k || x.X.cols() != k)
    throw std::invalid_argument("grad_theta_compressed: X must be K x K");

  const CVec u = theta.unit_diag();
  CMat ht = ch.H;
  for (Eigen::Index c = 0; c < n; ++c) ht.col(c) *= u(c);
  const CMat Hc = ht * ch.G;
  const CMat W = Hc.adjoint() * x.X;
  const CMat S = Hc * W;

  // dR/dS in the doubled convention.
  const double s2 = cfg.noise_power_w;
  CMat s_bar(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double total = s2 + S.row(i).squaredNorm();
    const double interf = total - std::norm(S(i, i));
    const double wi = cfg.weight(static_cast<int>(i)) / kLn2;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double c = 1.0 / total - (i == j ? 0.0 : 1.0 / interf);
      s_bar(i, j) = 2.0 * wi * c * S(i, j);
    }
  }

  // S = Hc W and W = Hc^H X; both paths feed the cascade cotangent.
  CMat hc_bar = s_bar * W.adjoint();
  const CMat w_bar = Hc.adjoint() * s_bar;
  hc_bar += x.X * w_bar.adjoint();

  const CMat ht_bar = hc_bar * ch.G.adjoint();
  RVec g(n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const Complex u_bar = (ht_bar.col(c).cwiseProduct(ch.H.col(c).conjugate())).sum();
    g(c) = std::imag(u_bar * std::conj(u(c)));
  }
  return g;
}

double mean_loss(const std::vector<double>& losses) {
  if (losses.empty()) throw std::invalid_argument("mean_loss: need at least one loss value");
  double acc = 0.0;
  for (double l : losses) acc += l;
  return acc / static_cast<double>(losses.size());
}

ScaledProblem rescale_problem(const ChannelPair& ch, const SystemConfig& cfg) {
  // Target entry scales for feasible precoders in the reparameterized
  // problem, matched to the typical magnitude of the update networks'
  // outputs so additive updates refine rather than overwrite. The
  // compressed-precoder target also pins the raw scale of the rate
  // gradients fed to the networks.
  constexpr double kEntryScale = 0.2;
  constexpr double kXEntryScale = 0.2;

  const double k = static_cast<double>(ch.H.rows());
  const double n = static_cast<double>(ch.H.cols());
  const double m = static_cast<double>(ch.G.cols());

  ScaledProblem out;
  out.cfg = cfg;
  const double h_rms = std::sqrt(ch.H.squaredNorm() / static_cast<double>(ch.H.size()));
  const double g_rms = std::sqrt(ch.G.squaredNorm() / static_cast<double>(ch.G.size()));
  out.h_scale = h_rms > 0.0 ? h_rms : 1.0;
  out.g_scale = g_rms > 0.0 ? g_rms : 1.0;

  // Power budget giving W entries ~ kEntryScale.
  const double p_scaled = m * k * kEntryScale * kEntryScale;
  // Cascade Frobenius target giving X entries ~ kXEntryScale; under the
  // RMS-normalized channels the decorrelated estimate is sqrt(K M N).
  const double hc_target = std::sqrt(p_scaled / k) / kXEntryScale;
  const double hc_est = std::sqrt(k * m * n);
  const double extra = std::sqrt(std::max(hc_est / hc_target, 1e-12));
  out.h_scale *= extra;
  out.g_scale *= extra;

  out.channel.H = ch.H / out.h_scale;
  out.channel.G = ch.G / out.g_scale;
  out.cfg.transmit_power_w = p_scaled;
  const double power_ratio = p_scaled / cfg.transmit_power_w;
  const double cs = out.h_scale * out.g_scale;
  out.cfg.noise_power_w = cfg.noise_power_w * power_ratio / (cs * cs);
  out.w_unscale = std::sqrt(cfg.transmit_power_w / p_scaled);
  return out;
}

}  // namespace risopt::sysmetrics
