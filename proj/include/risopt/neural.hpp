// SPDX-License-Identifier: Apache-2.0
//
// The two small gradient-input networks, the sigmoid differential
// regulator, Adam updates, and reverse-mode differentiation of the
// one-outer-iteration unrolled trajectory.

#ifndef RISOPT_NEURAL_HPP
#define RISOPT_NEURAL_HPP

#include <vector>

#include "risopt/chanmodel.hpp"
#include "risopt/common.hpp"
#include "risopt/sysmetrics.hpp"

namespace risopt::neural {

using chanmodel::ChannelPair;
using chanmodel::SystemConfig;
using sysmetrics::CompressedPrecoder;
using sysmetrics::PhaseVector;
using sysmetrics::Precoder;

/// Linear-ReLU-...-Linear perceptron. The default build has a single
/// hidden layer (weights[0]: hidden x in, weights[1]: out x hidden), which
/// is the shape used by both the precoding and theta networks; deeper
/// stacks exist only for the depth sweep.
struct MlpParams {
  std::vector<RMat> weights;
  std::vector<RVec> biases;

  int input_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().cols()); }
  int output_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.back().rows()); }
  std::size_t layer_count() const { return weights.size(); }

  MlpParams zeros_like() const;
  void set_zero();
  void accumulate(const MlpParams& other, double factor = 1.0);
  void scale(double factor);
  double squared_norm() const;
};

/// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) per layer for both weights
/// and biases, drawn from the given stream.
MlpParams make_mlp(int in_dim, int hidden_dim, int out_dim, int hidden_layers, Rng& rng);
MlpParams make_zero_mlp(int in_dim, int hidden_dim, int out_dim, int hidden_layers = 1);

RVec mlp_forward(const MlpParams& params, const RVec& input);

struct MlpBackwardResult {
  MlpParams param_grads;
  RVec input_grad;
};

/// Exact reverse-mode vector-Jacobian product; the ReLU subgradient at 0
/// is taken as 0.
MlpBackwardResult mlp_backward(const MlpParams& params, const RVec& input, const RVec& upstream);

struct RegulatorSpec {
  double lambda = kTwoPi;
};

/// Entrywise lambda * sigmoid(x); outputs lie strictly inside (0, lambda).
RVec regulator(const RVec& delta_theta_raw, const RegulatorSpec& spec);

/// Default RMS of preprocessed network inputs; biases dominate the early
/// epochs so the update maps start out stable.
inline constexpr double kInputScale = 0.3;

/// Network-input preprocessing: rescale to a fixed root-mean-square entry
/// magnitude so the layers see the same data scale at any SINR operating
/// point (a zero input passes through unchanged).
RVec normalize_input(const RVec& v, double target_rms = kInputScale);
CMat normalize_input(const CMat& m, double target_rms = kInputScale);

/// Reverse-mode companion of normalize_input: cotangent of the raw matrix
/// given the cotangent of the normalized output.
CMat normalize_input_vjp(const CMat& raw, const CMat& out_cotangent,
                         double target_rms = kInputScale);

struct AdamState {
  MlpParams m;
  MlpParams v;
  long t = 0;

  static AdamState zeros_like(const MlpParams& params);
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam descent step on the loss; updates state and
/// params in place.
void adam_step(AdamState& state, const MlpParams& grads, MlpParams& params, double lr,
               const AdamOptions& opts = {});

/// Gradient inputs of one unrolled outer iteration, captured on a base run
/// and replayed by the finite-difference oracle. The reverse pass treats
/// these inputs as constants, so the differentiated function is the
/// trajectory with them frozen.
struct FrozenInputs {
  std::vector<RVec> theta_grads;  // one per TN inner step
  std::vector<CMat> x_grads;      // one per PN inner step
};

/// Per-inner-step feasibility observations of a trajectory.
struct StepProbe {
  std::vector<double> regulator_min;
  std::vector<double> regulator_max;
  std::vector<double> power_ratio;        // Tr(W^H W)/P after each PN step
  std::vector<double> unit_modulus_dev;   // max ||Theta_nn| - 1| after each TN step
};

struct TrajectoryConfig {
  int inner_steps = 1;
  double regulator_lambda = kTwoPi;
  /// When false (default) and inner_steps == 1, the reverse pass also
  /// differentiates through the precoding network's gradient input (the
  /// phases enter that input through the cascade), coupling the two
  /// networks' training signals. With true, all gradient inputs are
  /// treated as constants (first-order unroll); multi-step trajectories
  /// always detach.
  bool detach_inputs = false;
  const FrozenInputs* replay = nullptr;
  FrozenInputs* capture = nullptr;
  StepProbe* probe = nullptr;
};

struct TrajectoryResult {
  double loss = 0.0;  // -R(W*, Theta*) on the supplied channel
  double se = 0.0;
  PhaseVector theta_star;
  CompressedPrecoder x_star;
  Precoder w_star;
  MlpParams pn_grad;
  MlpParams tn_grad;
  double seconds_tn = 0.0;  // wall clock spent in the theta half
  double seconds_pn = 0.0;  // wall clock spent in the precoder half
};

/// Runs one outer iteration (theta phase first with the inherited
/// compressed precoder, whose full precoder re-recovers at every phase
/// value, then the precoder phase at the optimized phases) and returns
/// reverse-mode gradients of the outer-iteration loss w.r.t. both
/// networks' parameters. The chain runs through the regulator, the phase
/// composition, power normalization and precoder recovery. Throws
/// std::runtime_error with a stage tag on non-finite intermediates.
TrajectoryResult trajectory_grads(const ChannelPair& ch, const PhaseVector& theta_init,
                                  const CompressedPrecoder& x_init,
                                  const CompressedPrecoder& x_star_in, const MlpParams& params_pn,
                                  const MlpParams& params_tn, const SystemConfig& cfg,
                                  const TrajectoryConfig& traj);

/// Forward pass only, same semantics (used by the finite-difference
/// oracle and the inner-step building blocks).
TrajectoryResult trajectory_forward(const ChannelPair& ch, const PhaseVector& theta_init,
                                    const CompressedPrecoder& x_init,
                                    const CompressedPrecoder& x_star_in, const MlpParams& params_pn,
                                    const MlpParams& params_tn, const SystemConfig& cfg,
                                    const TrajectoryConfig& traj);

}  // namespace risopt::neural

#endif  // RISOPT_NEURAL_HPP
