// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver: sweep configuration, stable per-sample seeding,
// paired method comparisons over N_s channel samples, timing profiles and
// CSV/JSON emission.

#ifndef RISOPT_HARNESS_HPP
#define RISOPT_HARNESS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "risopt/baselines.hpp"
#include "risopt/chanmodel.hpp"
#include "risopt/common.hpp"
#include "risopt/gmml.hpp"

namespace risopt::harness {

using chanmodel::ChannelPair;
using chanmodel::SystemConfig;

enum class SweepKind { Power, RisElements, Antennas, Cee, Convergence, Timing, Width, Depth };
enum class Method { Gmml, Gml, Ml, Ao, RandomPhase, UpperBound };

const char* sweep_name(SweepKind k);
const char* method_name(Method m);
Method parse_method(const std::string& name);      // throws on unknown
SweepKind parse_sweep(const std::string& name);    // throws on unknown

struct ExperimentSpec {
  SweepKind sweep = SweepKind::Power;
  std::vector<double> values;      // strictly increasing
  int samples = 20;                // N_s
  std::vector<Method> methods{Method::Gmml, Method::Ao, Method::RandomPhase};
  SystemConfig base;
  gmml::GmmlHyper hyper;
  std::uint64_t master_seed = 1;
  int upper_bound_restarts = 20;
  std::optional<double> cee_db;    // corrupt design CSI at this level (non-cee sweeps)
  int workers = 0;                 // 0 => hardware concurrency

  void validate() const;
};

struct ResultRow {
  double sweep_value = 0.0;
  std::string method;
  double mean_se = 0.0;
  double std_se = 0.0;
  double mean_time_s = 0.0;
  int sample_count = 0;
  int failures = 0;
};

struct ResultTable {
  std::string sweep;
  std::vector<ResultRow> rows;
};

/// The channel consumed by every method at a given (sweep value, sample):
/// positions and fading are drawn from a seed derived from
/// (master, value, sample), so the comparison is paired by construction.
ChannelPair make_channel(const SystemConfig& cfg, std::uint64_t master_seed, double sweep_value,
                         int sample_index);

ResultTable run_experiment(const ExperimentSpec& spec);

struct TimingRow {
  int bs_antennas = 0;
  int ris_elements = 0;
  std::string method;
  double mean_seconds = 0.0;  // median over repetitions, warm-up excluded
};

struct TimingSpec {
  std::vector<int> bs_antennas{32, 64, 128, 256};
  int ris_elements = 100;
  int users = 4;
  int repetitions = 3;
  SystemConfig base;
  gmml::GmmlHyper hyper;
  std::uint64_t master_seed = 1;
};

std::vector<TimingRow> timing_profile(const TimingSpec& spec);

enum class EmitFormat { Csv, Json };

/// Deterministic column order, floats at 9 significant digits.
void emit(const ResultTable& table, const std::string& path, EmitFormat format);
std::string emit_to_string(const ResultTable& table, EmitFormat format);
ResultTable parse_result_csv(const std::string& text);

void emit_timing(const std::vector<TimingRow>& rows, const std::string& path, EmitFormat format);

/// Least-squares slope of log(time) against log(M).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace risopt::harness

#endif  // RISOPT_HARNESS_HPP
