// SPDX-License-Identifier: Apache-2.0
//
// Classical reference solvers: WMMSE precoding with a bisection-found
// power dual, Riemannian conjugate-gradient phase optimization on the
// product of unit circles, their alternating composition, the random-phase
// baseline and the restart-based upper-bound proxy.

#ifndef RISOPT_BASELINES_HPP
#define RISOPT_BASELINES_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "risopt/chanmodel.hpp"
#include "risopt/common.hpp"
#include "risopt/sysmetrics.hpp"

namespace risopt::baselines {

using chanmodel::ChannelPair;
using chanmodel::SystemConfig;
using sysmetrics::PhaseVector;
using sysmetrics::Precoder;

struct WmmseOptions {
  double tol = 1e-6;   // relative SE change stopping rule
  int max_iter = 200;
};

struct WmmseResult {
  Precoder w;
  CVec rx_scalars;       // u_k
  RVec mse_weights;      // Omega_k (>= 1 at consistency)
  double dual = 0.0;     // lambda >= 0, power-constraint multiplier
  std::vector<double> se_trace;  // SE before iteration 1, then after each
  bool converged = false;
};

WmmseResult wmmse(const CMat& Hc, const SystemConfig& cfg, const WmmseOptions& opts = {});

struct RcgOptions {
  int iters = 50;
  double armijo_step0 = 1.0;
  double armijo_shrink = 0.5;
  double armijo_c = 1e-4;
  int max_backtracks = 30;
};

struct RcgResult {
  PhaseVector theta;
  bool stalled = false;
  std::vector<double> se_trace;  // SE at start, then after each accepted step
};

RcgResult rcg_theta(const Precoder& w, const PhaseVector& theta_start, const ChannelPair& ch,
                    const SystemConfig& cfg, const RcgOptions& opts = {});

/// Euclidean gradient (doubled Wirtinger convention) of the sum rate with
/// respect to the unit-modulus vector u = diag(Theta), at fixed W.
/// Exposed for the finite-difference oracle.
CVec rcg_euclidean_grad(const Precoder& w, const PhaseVector& theta, const ChannelPair& ch,
                        const SystemConfig& cfg);

/// Tangent projection at u: g - Re(g o conj(u)) o u.
CVec rcg_project_tangent(const CVec& grad, const CVec& u);

struct AoOptions {
  double outer_tol = 1e-4;
  int max_outer = 30;
  WmmseOptions wmmse;
  RcgOptions rcg;
  std::optional<PhaseVector> theta_init;  // random draw when absent
};

struct AoResult {
  Precoder w;
  PhaseVector theta;
  std::vector<double> se_trace;  // SE after each outer loop
  double se = 0.0;
  int outer_loops = 0;
};

/// Alternates WMMSE at fixed phases with RCG at a fixed precoder, starting
/// from a random phase draw, until the relative SE gain drops below
/// outer_tol.
AoResult ao(const ChannelPair& ch, const SystemConfig& cfg, Rng& rng, const AoOptions& opts = {});

struct RandomPhaseResult {
  PhaseVector theta;
  Precoder w;
  double se = 0.0;
};

/// Baseline 1: draw phases uniformly, then solve the precoder by WMMSE.
RandomPhaseResult random_phase(const ChannelPair& ch, const SystemConfig& cfg, Rng& rng,
                               const WmmseOptions& opts = {});

/// Highest SE over `restarts` independently initialized AO runs. Restart r
/// uses a seed derived from base_seed and r, so restart sets are nested.
double upper_bound_proxy(const ChannelPair& ch, const SystemConfig& cfg, int restarts,
                         std::uint64_t base_seed, const AoOptions& opts = {});

}  // namespace risopt::baselines

#endif  // RISOPT_BASELINES_HPP
