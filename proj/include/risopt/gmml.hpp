// SPDX-License-Identifier: Apache-2.0
//
// The gradient-based manifold meta learning optimizer: the
// epoch/outer/inner nested loop with PN/TN alternation, the maximum-SE
// recorder, and the GML / ML ablation variants.

#ifndef RISOPT_GMML_HPP
#define RISOPT_GMML_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "risopt/chanmodel.hpp"
#include "risopt/common.hpp"
#include "risopt/neural.hpp"
#include "risopt/sysmetrics.hpp"

namespace risopt::gmml {

using chanmodel::ChannelPair;
using chanmodel::SystemConfig;
using neural::MlpParams;
using sysmetrics::CompressedPrecoder;
using sysmetrics::PhaseVector;
using sysmetrics::Precoder;

enum class Mode { Gmml, Gml, Ml };

const char* mode_name(Mode m);

struct GmmlHyper {
  int epochs = 500;        // N_e
  int outer_steps = 1;     // N_o
  int inner_steps = 1;     // N_i
  double lr_x = 1e-3;      // alpha_X
  double lr_theta = 1.5e-3;  // alpha_Theta
  double regulator_lambda = kTwoPi;
  int tn_update_interval = 5;  // n_0, in epochs
  Mode mode = Mode::Gmml;
  int hidden_neurons = 200;
  int hidden_layers = 1;

  void validate() const;
};

/// Per-column input width of the precoding network: 2K for GMML (the
/// compressed precoder), 2M for the variants that operate on W directly.
int pn_input_dim(Mode mode, const SystemConfig& cfg);
int tn_input_dim(const SystemConfig& cfg);

struct RunTrace {
  std::vector<double> design_se;  // per epoch, evaluated on the design channel
  std::vector<double> eval_se;    // per epoch, evaluated on the true channel
  std::vector<double> best_se;    // cumulative maximum of recorded SEs
  std::vector<double> elapsed_ms; // cumulative wall clock at end of epoch

  double max_se = 0.0;            // final MAX recorder value (design channel)
  double eval_se_at_best = 0.0;   // SE of (w_opt, theta_opt) on the eval channel
  Precoder w_opt;
  PhaseVector theta_opt;

  double seconds_total = 0.0;
  double seconds_tn = 0.0;
  double seconds_pn = 0.0;
};

/// Recorded network-parameter history, test instrumentation only.
struct EpochProbe {
  bool record_params = false;
  std::vector<MlpParams> pn_per_epoch;
  std::vector<MlpParams> tn_per_epoch;
  neural::StepProbe* steps = nullptr;
  // Iterate values at the start of each outer iteration (reset semantics).
  std::vector<RVec> outer_theta_start;
  std::vector<CMat> outer_x_start;
};

/// One unrolled outer iteration of the W-space ablations (the GML / ML
/// counterpart of neural::trajectory_grads). w_init is the reset precoder
/// seed; with iterate_inputs the networks see the current iterates instead
/// of rate gradients.
neural::TrajectoryResult variant_trajectory_grads(const ChannelPair& ch,
                                                  const PhaseVector& theta_init,
                                                  const CMat& w_init, const Precoder& w_star_in,
                                                  const MlpParams& params_pn,
                                                  const MlpParams& params_tn,
                                                  const SystemConfig& cfg,
                                                  const neural::TrajectoryConfig& traj,
                                                  bool iterate_inputs, bool want_grads = true);

/// One inner-loop TN pass: n_steps of compressed-objective gradient
/// evaluation at the inherited compressed precoder (whose full precoder
/// re-recovers at each phase value), network output, regulator, and
/// additive phase composition.
PhaseVector tn_inner(const PhaseVector& theta_start, const CompressedPrecoder& x_star,
                     const ChannelPair& ch, const SystemConfig& cfg, const MlpParams& params_tn,
                     const neural::RegulatorSpec& spec, int n_steps);

struct PnInnerResult {
  CompressedPrecoder x;
  Precoder w;
};

/// One inner-loop PN pass at fixed phases: gradient input, per-column
/// network update, power normalization and precoder recovery.
PnInnerResult pn_inner(const CompressedPrecoder& x_start, const PhaseVector& theta_star,
                       const ChannelPair& ch, const SystemConfig& cfg, const MlpParams& params_pn,
                       int n_steps);

/// Full optimization of one channel sample. The optimizer sees
/// channel_design; recorded eval_se columns are computed on channel_eval
/// (identical to channel_design under perfect CSI). The MAX recorder
/// selects by design-channel SE.
RunTrace run(const ChannelPair& channel_design, const ChannelPair& channel_eval,
             const SystemConfig& cfg, const GmmlHyper& hyper, Rng& rng, EpochProbe* probe = nullptr);

/// As run(), but with caller-supplied initial network parameters and
/// iterates (test hook; run() draws them from the stream).
struct InitialState {
  MlpParams pn;
  MlpParams tn;
  PhaseVector theta0;
  CompressedPrecoder x0_unnormalized;  // GMML: K x K; GML/ML: the M x K precoder seed
};

RunTrace run_from_state(const ChannelPair& channel_design, const ChannelPair& channel_eval,
                        const SystemConfig& cfg, const GmmlHyper& hyper, const InitialState& init,
                        EpochProbe* probe = nullptr);

InitialState draw_initial_state(const SystemConfig& cfg, const GmmlHyper& hyper, Rng& rng);

/// Writes the row-per-epoch CSV: epoch, design_SE, eval_SE, best_SE, elapsed_ms.
void write_trace_csv(const RunTrace& trace, const std::string& path);

}  // namespace risopt::gmml

#endif  // RISOPT_GMML_HPP
