// SPDX-License-Identifier: Apache-2.0
//
// Geometry-based Rician mmWave channel generation for the RIS-aided
// MU-MISO downlink, plus the channel-estimation-error corruption model.

#ifndef RISOPT_CHANMODEL_HPP
#define RISOPT_CHANMODEL_HPP

#include <limits>
#include <string>
#include <vector>

#include "risopt/common.hpp"

namespace risopt::chanmodel {

/// System-level parameters. Defaults follow the 28 GHz desk-scale scenario:
/// BS at the origin, RIS at (100 m, 0 m), users in a 5 m disk around
/// (100 m, 15 m), half-wavelength ULAs at both ends.
struct SystemConfig {
  int num_bs_antennas = 64;    // M
  int num_ris_elements = 100;  // N
  int num_users = 4;           // K

  double transmit_power_w = dbm_to_watts(10.0);   // P, linear watts
  double noise_power_w = dbm_to_watts(-120.0);    // sigma^2, linear watts
  std::vector<double> user_weights;              // empty => all 1.0

  double carrier_freq_hz = 28e9;
  Vec2 bs_pos{0.0, 0.0};
  Vec2 ris_pos{100.0, 0.0};
  Vec2 user_center{100.0, 15.0};
  double user_radius_m = 5.0;
  double rician_h = 10.0;  // kappa for the RIS-user links
  double rician_g = 10.0;  // kappa for the BS-RIS link
  double antenna_spacing = 0.5;  // fraction of wavelength

  double weight(int k) const { return user_weights.empty() ? 1.0 : user_weights.at(static_cast<std::size_t>(k)); }

  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

/// H is K x N with row k equal to h_k^H (the RIS-to-user-k channel,
/// conjugate-transposed); G is the N x M BS-to-RIS channel.
struct ChannelPair {
  CMat H;
  CMat G;

  bool same_dims(const ChannelPair& o) const {
    return H.rows() == o.H.rows() && H.cols() == o.H.cols() && G.rows() == o.G.rows() &&
           G.cols() == o.G.cols();
  }
};

struct CorruptionSpec {
  double cee_db = -10.0;
  /// Rescale the drawn error so the per-realization norm ratio hits the
  /// target exactly (default). Otherwise the target holds in expectation.
  bool per_sample_exact = true;
};

/// Sentinel returned by measured_cee for a zero estimation error.
inline constexpr double kNoErrorDb = -std::numeric_limits<double>::infinity();

std::vector<Vec2> place_users(const SystemConfig& cfg, Rng& rng);

double pathloss_db(double distance_m, bool is_los);

/// ULA steering vector: entry n = exp(j 2 pi spacing n sin(angle)).
/// Arrays are modeled along the scene y-axis, so `angle` is the global
/// azimuth of the link direction measured from the x-axis.
CVec steering_vector(int num_elements, double spacing_wavelengths, double angle_rad);

ChannelPair gen_channel(const SystemConfig& cfg, const std::vector<Vec2>& user_positions, Rng& rng);

CMat corrupt_csi(const CMat& channel, const CorruptionSpec& spec, Rng& rng);
ChannelPair corrupt_csi(const ChannelPair& channel, const CorruptionSpec& spec, Rng& rng);

/// 10 log10(|h - h_est|^2 / |h|^2); returns kNoErrorDb when the error is
/// identically zero. Throws std::domain_error on a zero true channel.
double measured_cee(const CMat& true_channel, const CMat& estimated_channel);

void save_channel(const std::string& path, const ChannelPair& ch);
ChannelPair load_channel(const std::string& path);
std::string channel_to_string(const ChannelPair& ch);

}  // namespace risopt::chanmodel

#endif  // RISOPT_CHANMODEL_HPP
