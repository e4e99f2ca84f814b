// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <sstream>

#include "risopt/chanmodel.hpp"
#include "risopt/serialize.hpp"

using namespace risopt;
using namespace risopt::chanmodel;

namespace {

SystemConfig tiny_cfg(int m = 4, int n = 16, int k = 2) {
  SystemConfig cfg;
  cfg.num_bs_antennas = m;
  cfg.num_ris_elements = n;
  cfg.num_users = k;
  return cfg;
}

}  // namespace

TEST_CASE("pathloss formulas") {
  CHECK(pathloss_db(100.0, true) == doctest::Approx(100.9).epsilon(1e-12));
  CHECK(pathloss_db(1.0, true) == doctest::Approx(56.9).epsilon(1e-12));
  CHECK(pathloss_db(100.0, false) == doctest::Approx(133.7).epsilon(1e-12));
  CHECK_THROWS_AS(pathloss_db(0.0, true), std::domain_error);
  CHECK_THROWS_AS(pathloss_db(-3.0, false), std::domain_error);
}

TEST_CASE("pathloss is monotone in distance") {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double d1 = rng.uniform(0.1, 500.0);
    const double d2 = d1 + rng.uniform(0.01, 100.0);
    CHECK(pathloss_db(d1, true) < pathloss_db(d2, true));
    CHECK(pathloss_db(d1, false) < pathloss_db(d2, false));
  }
}

TEST_CASE("steering vector") {
  const CVec ones = steering_vector(5, 0.5, 0.0);
  for (int i = 0; i < 5; ++i) CHECK(std::abs(ones(i) - Complex(1.0, 0.0)) < 1e-15);

  const CVec two = steering_vector(2, 0.5, kPi / 2.0);
  CHECK(std::abs(two(0) - Complex(1.0, 0.0)) < 1e-12);
  CHECK(std::abs(two(1) - Complex(-1.0, 0.0)) < 1e-12);

  const CVec v = steering_vector(8, 0.5, kPi / 6.0);
  CHECK(v.squaredNorm() == doctest::Approx(8.0).epsilon(1e-12));
  for (int i = 0; i < 8; ++i) CHECK(std::abs(std::abs(v(i)) - 1.0) < 1e-14);
}

TEST_CASE("place_users: degenerate disk and containment") {
  SystemConfig cfg = tiny_cfg();
  cfg.user_radius_m = 0.0;
  Rng rng(2);
  for (const auto& p : place_users(cfg, rng)) {
    CHECK(p.x == cfg.user_center.x);
    CHECK(p.y == cfg.user_center.y);
  }

  cfg.user_radius_m = 5.0;
  for (std::uint64_t seed : {1ULL, 42ULL, 977ULL}) {
    Rng r2(seed);
    for (const auto& p : place_users(cfg, r2))
      CHECK(distance(p, cfg.user_center) <= 5.0 + 1e-12);
  }
}

TEST_CASE("place_users: Monte-Carlo mean sits at the disk center") {
  SystemConfig cfg = tiny_cfg();
  cfg.num_users = 1;
  Rng rng(3);
  double sx = 0.0, sy = 0.0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto p = place_users(cfg, rng)[0];
    sx += p.x;
    sy += p.y;
  }
  CHECK(std::abs(sx / draws - cfg.user_center.x) < 0.05);
  CHECK(std::abs(sy / draws - cfg.user_center.y) < 0.05);
}

TEST_CASE("gen_channel: huge Rician factor leaves the pure steering product") {
  SystemConfig cfg = tiny_cfg(4, 8, 1);
  cfg.rician_h = 1e16;
  cfg.rician_g = 1e16;
  Rng rng(4);
  const auto pos = place_users(cfg, rng);
  const ChannelPair ch = gen_channel(cfg, pos, rng);

  const double d_user = distance(cfg.ris_pos, pos[0]);
  const double lh = std::pow(10.0, -pathloss_db(d_user, true) / 20.0);
  const double lg = std::pow(10.0, -pathloss_db(distance(cfg.bs_pos, cfg.ris_pos), true) / 20.0);
  for (Eigen::Index i = 0; i < ch.H.size(); ++i)
    CHECK(std::abs(ch.H.data()[i]) == doctest::Approx(lh).epsilon(1e-7));
  for (Eigen::Index i = 0; i < ch.G.size(); ++i)
    CHECK(std::abs(ch.G.data()[i]) == doctest::Approx(lg).epsilon(1e-7));
}

TEST_CASE("gen_channel: second moment matches the Rician mixture") {
  // E|h_k|^2 = N (kappa L_los^2 + L_nlos^2) / (1 + kappa); the kappa = 0 and
  // kappa = 10 cases are checked by Monte Carlo against this closed form.
  for (double kappa : {0.0, 10.0}) {
    SystemConfig cfg = tiny_cfg(2, 16, 1);
    cfg.rician_h = kappa;
    cfg.rician_g = kappa;
    Rng rng(5);
    const auto pos = place_users(cfg, rng);
    const double d_user = distance(cfg.ris_pos, pos[0]);
    const double lh_los = std::pow(10.0, -pathloss_db(d_user, true) / 20.0);
    const double lh_nlos = std::pow(10.0, -pathloss_db(d_user, false) / 20.0);
    const double want = cfg.num_ris_elements *
                        (kappa * lh_los * lh_los + lh_nlos * lh_nlos) / (1.0 + kappa);

    double acc = 0.0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
      const ChannelPair ch = gen_channel(cfg, pos, rng);
      acc += ch.H.row(0).squaredNorm();
    }
    CHECK(std::abs(acc / draws - want) < 0.02 * want);
  }
}

TEST_CASE("gen_channel rejects coincident geometry") {
  SystemConfig cfg = tiny_cfg();
  cfg.bs_pos = cfg.ris_pos;
  Rng rng(6);
  const std::vector<Vec2> pos(static_cast<std::size_t>(cfg.num_users), Vec2{100.0, 15.0});
  CHECK_THROWS_AS(gen_channel(cfg, pos, rng), std::domain_error);
}

TEST_CASE("gen_channel is deterministic per seed") {
  const SystemConfig cfg = tiny_cfg();
  Rng r1(77), r2(77);
  const auto pos1 = place_users(cfg, r1);
  const auto pos2 = place_users(cfg, r2);
  const ChannelPair a = gen_channel(cfg, pos1, r1);
  const ChannelPair b = gen_channel(cfg, pos2, r2);
  CHECK(channel_to_string(a) == channel_to_string(b));
}

TEST_CASE("corrupt_csi: vanishing, exact-zero-dB and -10 dB targets") {
  Rng rng(8);
  const CMat h = rng.cgaussian_matrix(3, 5);

  const CMat nearly = corrupt_csi(h, CorruptionSpec{-300.0, true}, rng);
  CHECK((nearly - h).cwiseAbs().maxCoeff() < 1e-13 * h.cwiseAbs().maxCoeff());

  const CMat at0 = corrupt_csi(h, CorruptionSpec{0.0, true}, rng);
  CHECK(measured_cee(h, at0) == doctest::Approx(0.0).epsilon(1e-12));

  const CMat at10 = corrupt_csi(h, CorruptionSpec{-10.0, true}, rng);
  const double err_sq = (at10 - h).squaredNorm();
  CHECK(std::abs(err_sq - 0.1 * h.squaredNorm()) <= 1e-12 * h.squaredNorm());
}

TEST_CASE("corrupt_csi round-trips the target CEE exactly") {
  Rng rng(9);
  const CMat h = rng.cgaussian_matrix(4, 7);
  for (double target : {-25.0, -17.5, -10.0, -3.0, 0.0, 2.0}) {
    const CMat hat = corrupt_csi(h, CorruptionSpec{target, true}, rng);
    CHECK(std::abs(measured_cee(h, hat) - target) < 1e-9);
  }
}

TEST_CASE("corrupt_csi applies independently to H and G") {
  SystemConfig cfg = tiny_cfg();
  Rng rng(10);
  const auto pos = place_users(cfg, rng);
  const ChannelPair ch = gen_channel(cfg, pos, rng);
  const ChannelPair hat = corrupt_csi(ch, CorruptionSpec{-10.0, true}, rng);
  CHECK(std::abs(measured_cee(ch.H, hat.H) + 10.0) < 1e-9);
  CHECK(std::abs(measured_cee(ch.G, hat.G) + 10.0) < 1e-9);
}

TEST_CASE("corrupt_csi and measured_cee reject degenerate inputs") {
  Rng rng(11);
  const CMat zero = CMat::Zero(2, 2);
  CHECK_THROWS_AS(corrupt_csi(zero, CorruptionSpec{-10.0, true}, rng), std::domain_error);
  CHECK_THROWS_AS(measured_cee(zero, zero), std::domain_error);
  const CMat h = rng.cgaussian_matrix(2, 2);
  CHECK(measured_cee(h, h) == kNoErrorDb);
  CHECK(measured_cee(h, 2.0 * h) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("matrix serialization round-trips bit-exactly") {
  Rng rng(12);
  const CMat m = rng.cgaussian_matrix(3, 4);
  std::stringstream ss;
  serialize::write_matrix(ss, m);
  const CMat back = serialize::read_matrix(ss);
  REQUIRE(back.rows() == m.rows());
  REQUIRE(back.cols() == m.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    CHECK(back.data()[i].real() == m.data()[i].real());
    CHECK(back.data()[i].imag() == m.data()[i].imag());
  }
}

TEST_CASE("channel serialization round-trips through a file") {
  const SystemConfig cfg = tiny_cfg();
  Rng rng(13);
  const auto pos = place_users(cfg, rng);
  const ChannelPair ch = gen_channel(cfg, pos, rng);
  const std::string path = "/tmp/risopt_test_channel.txt";
  save_channel(path, ch);
  const ChannelPair back = load_channel(path);
  CHECK(channel_to_string(back) == channel_to_string(ch));
}

TEST_CASE("config validation") {
  SystemConfig cfg = tiny_cfg();
  cfg.num_ris_elements = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_cfg();
  cfg.num_users = 5;  // K > M
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_cfg();
  cfg.user_weights = {1.0, -1.0};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
