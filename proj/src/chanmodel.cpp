// SPDX-License-Identifier: Apache-2.0

#include "risopt/chanmodel.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "risopt/serialize.hpp"

namespace risopt::chanmodel {

void SystemConfig::validate() const {
  if (num_users < 1) throw std::invalid_argument("config: K must be >= 1");
  if (num_bs_antennas < num_users)
    throw std::invalid_argument("config: M must be >= K");
  if (num_ris_elements < 1) throw std::invalid_argument("config: N must be >= 1");
  if (!(transmit_power_w > 0.0)) throw std::invalid_argument("config: P must be > 0");
  if (!(noise_power_w > 0.0)) throw std::invalid_argument("config: noise power must be > 0");
  if (!user_weights.empty()) {
    if (static_cast<int>(user_weights.size()) != num_users)
      throw std::invalid_argument("config: weight count must equal K");
    for (double w : user_weights)
      if (!(w > 0.0)) throw std::invalid_argument("config: weights must be > 0");
  }
  if (user_radius_m < 0.0) throw std::invalid_argument("config: user radius must be >= 0");
  if (!(antenna_spacing > 0.0)) throw std::invalid_argument("config: antenna spacing must be > 0");
  if (rician_h < 0.0 || rician_g < 0.0)
    throw std::invalid_argument("config: Rician factors must be >= 0");
}

std::vector<Vec2> place_users(const SystemConfig& cfg, Rng& rng) {
  cfg.validate();
  std::vector<Vec2> out(static_cast<std::size_t>(cfg.num_users));
  for (auto& p : out) {
    // Uniform over the disk area.
    const double r = cfg.user_radius_m * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, kTwoPi);
    p = Vec2{cfg.user_center.x + r * std::cos(phi), cfg.user_center.y + r * std::sin(phi)};
  }
  return out;
}

double pathloss_db(double distance_m, bool is_los) {
  if (!(distance_m > 0.0)) throw std::domain_error("pathloss: distance must be > 0");
  const double lg = std::log10(distance_m);
  return is_los ? 56.9 + 22.0 * lg : 60.3 + 36.7 * lg;
}

CVec steering_vector(int num_elements, double spacing_wavelengths, double angle_rad) {
  if (num_elements < 1) throw std::invalid_argument("steering: need at least one element");
  CVec v(num_elements);
  const double step = kTwoPi * spacing_wavelengths * std::sin(angle_rad);
  for (int n = 0; n < num_elements; ++n) v(n) = std::polar(1.0, step * n);
  return v;
}

namespace {

double amplitude_gain(double pl_db) { return std::pow(10.0, -pl_db / 20.0); }

double azimuth(const Vec2& from, const Vec2& to) {
  return std::atan2(to.y - from.y, to.x - from.x);
}

}  // namespace

ChannelPair gen_channel(const SystemConfig& cfg, const std::vector<Vec2>& user_positions,
                        Rng& rng) {
  cfg.validate();
  if (static_cast<int>(user_positions.size()) != cfg.num_users)
    throw std::invalid_argument("gen_channel: need one position per user");

  const int m = cfg.num_bs_antennas;
  const int n = cfg.num_ris_elements;
  const int k = cfg.num_users;

  const double d_bs_ris = distance(cfg.bs_pos, cfg.ris_pos);
  if (!(d_bs_ris > 0.0)) throw std::domain_error("gen_channel: BS and RIS coincide");

  // BS-RIS link. LoS part is the steering outer product between the RIS
  // arrival and BS departure directions.
  const double lg_los = amplitude_gain(pathloss_db(d_bs_ris, true));
  const double lg_nlos = amplitude_gain(pathloss_db(d_bs_ris, false));
  const CVec a_ris_in = steering_vector(n, cfg.antenna_spacing, azimuth(cfg.ris_pos, cfg.bs_pos));
  const CVec a_bs_out = steering_vector(m, cfg.antenna_spacing, azimuth(cfg.bs_pos, cfg.ris_pos));
  const double kg = cfg.rician_g;
  CMat g_los = a_ris_in * a_bs_out.adjoint();
  CMat g_nlos = rng.cgaussian_matrix(n, m);
  CMat G = lg_los * std::sqrt(kg / (1.0 + kg)) * g_los +
           lg_nlos * std::sqrt(1.0 / (1.0 + kg)) * g_nlos;

  // RIS-user links; row k of H is h_k^H.
  CMat H(k, n);
  const double kh = cfg.rician_h;
  for (int uk = 0; uk < k; ++uk) {
    const double d = distance(cfg.ris_pos, user_positions[static_cast<std::size_t>(uk)]);
    if (!(d > 0.0)) throw std::domain_error("gen_channel: user coincides with the RIS");
    const double lh_los = amplitude_gain(pathloss_db(d, true));
    const double lh_nlos = amplitude_gain(pathloss_db(d, false));
    const CVec a_dep =
        steering_vector(n, cfg.antenna_spacing, azimuth(cfg.ris_pos, user_positions[static_cast<std::size_t>(uk)]));
    CVec h_nlos(n);
    for (int i = 0; i < n; ++i) h_nlos(i) = rng.cgaussian();
    const CVec h = lh_los * std::sqrt(kh / (1.0 + kh)) * a_dep +
                   lh_nlos * std::sqrt(1.0 / (1.0 + kh)) * h_nlos;
    H.row(uk) = h.adjoint();
  }

  return ChannelPair{std::move(H), std::move(G)};
}

CMat corrupt_csi(const CMat& channel, const CorruptionSpec& spec, Rng& rng) {
  if (!std::isfinite(spec.cee_db)) throw std::invalid_argument("corrupt_csi: CEE must be finite");
  const double ch_sq = channel.squaredNorm();
  if (!(ch_sq > 0.0)) throw std::domain_error("corrupt_csi: zero-norm channel");
  const double target_ratio = db_to_linear(spec.cee_db);

  CMat z = rng.cgaussian_matrix(channel.rows(), channel.cols());
  if (spec.per_sample_exact) {
    const double z_sq = z.squaredNorm();
    if (!(z_sq > 0.0)) throw std::runtime_error("corrupt_csi: degenerate error draw");
    z *= std::sqrt(target_ratio * ch_sq / z_sq);
  } else {
    z *= std::sqrt(target_ratio * ch_sq / static_cast<double>(channel.size()));
  }
  return channel + z;
}

ChannelPair corrupt_csi(const ChannelPair& channel, const CorruptionSpec& spec, Rng& rng) {
  ChannelPair out;
  out.H = corrupt_csi(channel.H, spec, rng);
  out.G = corrupt_csi(channel.G, spec, rng);
  return out;
}

double measured_cee(const CMat& true_channel, const CMat& estimated_channel) {
  if (true_channel.rows() != estimated_channel.rows() ||
      true_channel.cols() != estimated_channel.cols())
    throw std::invalid_argument("measured_cee: dimension mismatch");
  const double ch_sq = true_channel.squaredNorm();
  if (!(ch_sq > 0.0)) throw std::domain_error("measured_cee: zero true channel");
  const double err_sq = (true_channel - estimated_channel).squaredNorm();
  if (err_sq == 0.0) return kNoErrorDb;
  return 10.0 * std::log10(err_sq / ch_sq);
}

void save_channel(const std::string& path, const ChannelPair& ch) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_channel: cannot open " + path);
  serialize::write_matrix(os, ch.H);
  serialize::write_matrix(os, ch.G);
  if (!os) throw std::runtime_error("save_channel: write failed for " + path);
}

ChannelPair load_channel(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_channel: cannot open " + path);
  ChannelPair ch;
  ch.H = serialize::read_matrix(is);
  ch.G = serialize::read_matrix(is);
  return ch;
}

std::string channel_to_string(const ChannelPair& ch) {
  std::ostringstream os;
  serialize::write_matrix(os, ch.H);
  serialize::write_matrix(os, ch.G);
  return os.str();
}

}  // namespace risopt::chanmodel
