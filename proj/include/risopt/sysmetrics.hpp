// SPDX-License-Identifier: Apache-2.0
//
// SINR / spectral-efficiency evaluation, the cascaded channel, power
// regulation, range-space precoder recovery, and closed-form Wirtinger
// gradients of the weighted sum rate.
//
// Gradient convention throughout: for a real objective R and a complex
// variable z, grad = dR/dRe(z) + j dR/dIm(z) = 2 dR/dz*.

#ifndef RISOPT_SYSMETRICS_HPP
#define RISOPT_SYSMETRICS_HPP

#include <vector>

#include "risopt/chanmodel.hpp"
#include "risopt/common.hpp"

namespace risopt::sysmetrics {

using chanmodel::ChannelPair;
using chanmodel::SystemConfig;

/// N RIS phase angles, stored reduced to [0, 2*pi).
struct PhaseVector {
  RVec theta;

  PhaseVector() = default;
  explicit PhaseVector(RVec angles);

  Eigen::Index size() const { return theta.size(); }

  /// Diagonal of Theta = diag(exp(j theta)).
  CVec unit_diag() const;
};

PhaseVector random_phases(int n, Rng& rng);

/// M x K precoding matrix; column k serves user k.
struct Precoder {
  CMat W;
};

/// K x K compressed precoder X; W is recovered as Hc^H X.
struct CompressedPrecoder {
  CMat X;
};

/// K x M cascaded channel; row k = h_k^H Theta G. Recompute whenever the
/// phase vector changes.
struct CascadedChannel {
  CMat Hc;
};

/// Complex matrix in the doubled Wirtinger convention (2 dR/dz*).
struct WirtingerGrad {
  CMat value;
};

CascadedChannel cascaded(const CMat& H, const PhaseVector& theta, const CMat& G);
inline CascadedChannel cascaded(const ChannelPair& ch, const PhaseVector& theta) {
  return cascaded(ch.H, theta, ch.G);
}

/// Weighted sum rate of an explicit (Hc, W) pair.
double se_from_cascaded(const CMat& Hc, const CMat& W, const SystemConfig& cfg);

double spectral_efficiency(const Precoder& w, const PhaseVector& theta, const ChannelPair& ch,
                           const SystemConfig& cfg);

double se_compressed(const CompressedPrecoder& x, const PhaseVector& theta, const ChannelPair& ch,
                     const SystemConfig& cfg);

/// Scales X so the recovered precoder Hc^H X meets the power constraint
/// with equality. Throws std::domain_error when the recovered power is zero.
CompressedPrecoder normalize_power(const CompressedPrecoder& x, const CMat& Hc, double total_power);

Precoder recover_w(const CMat& Hc, const CompressedPrecoder& x);

/// Sum over users of weighted rate gradients w.r.t. the precoder columns,
/// assembled from the closed forms for grad_{w_k} R_k and grad_{w_k} R_i.
CMat grad_w(const CMat& W, const CMat& Hc, const SystemConfig& cfg);

/// The K x K factor T in grad_w = 2 Hc^H T, as a function of the signal
/// matrix S = Hc W.
CMat rate_t_matrix(const CMat& S, const SystemConfig& cfg);

/// Reverse-mode cotangent of S for the map S -> rate_t_matrix(S), in the
/// doubled Wirtinger convention. Used by the trajectory pass that
/// differentiates through the gradient inputs.
CMat rate_t_matrix_vjp(const CMat& S, const SystemConfig& cfg, const CMat& t_bar);

WirtingerGrad grad_x(const CompressedPrecoder& x, const PhaseVector& theta, const ChannelPair& ch,
                     const SystemConfig& cfg);

/// dR/dtheta_n at a fixed precoder, differentiating through
/// Theta_nn = exp(j theta_n); the unit-modulus constraint is implicit in
/// the parameterization.
RVec grad_theta(const Precoder& w, const PhaseVector& theta, const ChannelPair& ch,
                const SystemConfig& cfg);

/// dR/dtheta_n of the compressed objective se_compressed(x, theta): the
/// precoder is re-recovered as Hc(theta)^H X at every phase value, so the
/// gradient runs through the recovery as well as the direct path.
RVec grad_theta_compressed(const CompressedPrecoder& x, const PhaseVector& theta,
                           const ChannelPair& ch, const SystemConfig& cfg);

inline double loss_from_se(double se) { return -se; }

/// Mean of the accumulated per-outer-iteration losses. Throws
/// std::invalid_argument when empty.
double mean_loss(const std::vector<double>& losses);

/// SINR-preserving reparameterization of a problem instance: channels are
/// divided by per-matrix factors, the power budget is moved to
/// MK * 0.04 and the noise power follows, so that a feasible precoder (and
/// its compressed coordinates) has entries on the scale of the optimizer's
/// network outputs. A precoder W' feasible for the scaled problem maps
/// back to the original units as W = w_unscale * W', with every SINR and
/// SE value unchanged.
struct ScaledProblem {
  ChannelPair channel;
  SystemConfig cfg;
  double h_scale = 1.0;
  double g_scale = 1.0;
  double w_unscale = 1.0;

  Precoder to_physical(const Precoder& w_scaled) const {
    return Precoder{w_unscale * w_scaled.W};
  }
};

ScaledProblem rescale_problem(const ChannelPair& ch, const SystemConfig& cfg);

}  // namespace risopt::sysmetrics

#endif  // RISOPT_SYSMETRICS_HPP
