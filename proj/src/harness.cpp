// SPDX-License-Identifier: Apache-2.0

#include "risopt/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

namespace risopt::harness {

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

/// Round through the 9-significant-digit text representation so CSV and
/// JSON emit identical values.
double round9(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::strtod(buf, nullptr);
}

std::string fmt9(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

struct MethodOutcome {
  double se = 0.0;
  double seconds = 0.0;
  bool failed = false;
};

}  // namespace

const char* sweep_name(SweepKind k) {
  switch (k) {
    case SweepKind::Power: return "power";
    case SweepKind::RisElements: return "ris_elements";
    case SweepKind::Antennas: return "antennas";
    case SweepKind::Cee: return "cee";
    case SweepKind::Convergence: return "convergence";
    case SweepKind::Timing: return "timing";
    case SweepKind::Width: return "width";
    case SweepKind::Depth: return "depth";
  }
  return "?";
}

const char* method_name(Method m) {
  switch (m) {
    case Method::Gmml: return "GMML";
    case Method::Gml: return "GML";
    case Method::Ml: return "ML";
    case Method::Ao: return "AO";
    case Method::RandomPhase: return "RandomPhase";
    case Method::UpperBound: return "UpperBound";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::Gmml, Method::Gml, Method::Ml, Method::Ao, Method::RandomPhase,
                   Method::UpperBound})
    if (name == method_name(m)) return m;
  throw std::invalid_argument("unknown method: " + name);
}

SweepKind parse_sweep(const std::string& name) {
  for (SweepKind k : {SweepKind::Power, SweepKind::RisElements, SweepKind::Antennas,
                      SweepKind::Cee, SweepKind::Convergence, SweepKind::Timing, SweepKind::Width,
                      SweepKind::Depth})
    if (name == sweep_name(k)) return k;
  throw std::invalid_argument("unknown sweep: " + name);
}

void ExperimentSpec::validate() const {
  base.validate();
  hyper.validate();
  if (samples < 1) throw std::invalid_argument("spec: samples must be >= 1");
  if (values.empty()) throw std::invalid_argument("spec: need at least one sweep value");
  for (std::size_t i = 1; i < values.size(); ++i)
    if (!(values[i] > values[i - 1]))
      throw std::invalid_argument("spec: sweep values must be strictly increasing");
  if (methods.empty()) throw std::invalid_argument("spec: need at least one method");
  if (sweep == SweepKind::Timing)
    throw std::invalid_argument("spec: the timing sweep runs through timing_profile");
  if (upper_bound_restarts < 1)
    throw std::invalid_argument("spec: upper bound restarts must be >= 1");
}

namespace {

/// Sweep-adjusted system/hyper configuration for one sweep point.
struct PointConfig {
  SystemConfig cfg;
  gmml::GmmlHyper hyper;
  std::optional<double> cee_db;
  double channel_seed_value = 0.0;  // value used for channel seed derivation
};

PointConfig point_config(const ExperimentSpec& spec, double value) {
  PointConfig pc;
  pc.cfg = spec.base;
  pc.hyper = spec.hyper;
  pc.cee_db = spec.cee_db;
  pc.channel_seed_value = value;
  // Sweep values that leave the channel dimensions unchanged share
  // channels across sweep points (seed value 0), so per-sample curves are
  // comparable along the x-axis; dimension sweeps must redraw.
  switch (spec.sweep) {
    case SweepKind::Power:
      pc.cfg.transmit_power_w = dbm_to_watts(value);
      pc.channel_seed_value = 0.0;
      break;
    case SweepKind::RisElements:
      pc.cfg.num_ris_elements = static_cast<int>(value);
      break;
    case SweepKind::Antennas:
      pc.cfg.num_bs_antennas = static_cast<int>(value);
      break;
    case SweepKind::Cee:
      // Corruption level and its stream depend on the sweep value; the
      // underlying true channel does not.
      pc.cee_db = value;
      pc.channel_seed_value = 0.0;
      break;
    case SweepKind::Convergence:
      pc.channel_seed_value = 0.0;  // checkpoints share the channel per sample
      break;
    case SweepKind::Width:
      pc.hyper.hidden_neurons = static_cast<int>(value);
      pc.channel_seed_value = 0.0;
      break;
    case SweepKind::Depth:
      pc.hyper.hidden_layers = static_cast<int>(value);
      pc.channel_seed_value = 0.0;
      break;
    case SweepKind::Timing:
      break;
  }
  return pc;
}

MethodOutcome run_method(Method method, const ChannelPair& design, const ChannelPair& eval,
                         const PointConfig& pc, std::uint64_t method_seed, int ub_restarts) {
  MethodOutcome out;
  const double t0 = now_seconds();
  try {
    switch (method) {
      case Method::Gmml:
      case Method::Gml:
      case Method::Ml: {
        gmml::GmmlHyper hy = pc.hyper;
        hy.mode = method == Method::Gmml ? gmml::Mode::Gmml
                 : method == Method::Gml ? gmml::Mode::Gml
                                         : gmml::Mode::Ml;
        Rng rng(method_seed);
        const gmml::RunTrace trace = gmml::run(design, eval, pc.cfg, hy, rng);
        out.se = trace.eval_se_at_best;
        break;
      }
      case Method::Ao: {
        Rng rng(method_seed);
        const baselines::AoResult res = baselines::ao(design, pc.cfg, rng);
        out.se = sysmetrics::spectral_efficiency(res.w, res.theta, eval, pc.cfg);
        break;
      }
      case Method::RandomPhase: {
        Rng rng(method_seed);
        const baselines::RandomPhaseResult res = baselines::random_phase(design, pc.cfg, rng);
        out.se = sysmetrics::spectral_efficiency(res.w, res.theta, eval, pc.cfg);
        break;
      }
      case Method::UpperBound: {
        // Restart selection by design-channel SE, reporting on the true
        // channel (identical under perfect CSI).
        double best_design = -1.0;
        double best_eval = 0.0;
        for (int r = 0; r < ub_restarts; ++r) {
          Rng rng(derive_seed(method_seed, static_cast<double>(r), static_cast<std::uint64_t>(r)));
          const baselines::AoResult res = baselines::ao(design, pc.cfg, rng);
          if (res.se > best_design) {
            best_design = res.se;
            best_eval = sysmetrics::spectral_efficiency(res.w, res.theta, eval, pc.cfg);
          }
        }
        out.se = best_eval;
        break;
      }
    }
  } catch (const std::exception&) {
    out.failed = true;
  }
  out.seconds = now_seconds() - t0;
  return out;
}

struct CellResult {
  std::vector<MethodOutcome> by_method;              // aligned with spec.methods
  std::vector<std::vector<double>> best_se_curve;    // convergence sweep only
};

}  // namespace

ChannelPair make_channel(const SystemConfig& cfg, std::uint64_t master_seed, double sweep_value,
                         int sample_index) {
  Rng rng(derive_seed(master_seed, sweep_value, static_cast<std::uint64_t>(sample_index)));
  const auto positions = chanmodel::place_users(cfg, rng);
  return chanmodel::gen_channel(cfg, positions, rng);
}

ResultTable run_experiment(const ExperimentSpec& spec) {
  spec.validate();

  if (spec.sweep == SweepKind::Convergence) {
    // Full traces per sample; rows report the running best SE at each
    // checkpoint epoch. AO contributes its final SE as a flat reference.
    std::vector<double> checkpoints = spec.values;
    ResultTable table;
    table.sweep = sweep_name(spec.sweep);
    const PointConfig pc = point_config(spec, 0.0);

    std::vector<std::vector<std::vector<double>>> curve(
        spec.methods.size());  // method -> sample -> per-epoch best
    std::vector<std::vector<double>> flat(spec.methods.size());
    std::vector<std::vector<bool>> failed(spec.methods.size());
    for (auto& f : failed) f.assign(static_cast<std::size_t>(spec.samples), false);
    for (auto& c : curve) c.resize(static_cast<std::size_t>(spec.samples));
    for (auto& f : flat) f.assign(static_cast<std::size_t>(spec.samples), 0.0);

    for (int s = 0; s < spec.samples; ++s) {
      const ChannelPair channel = make_channel(pc.cfg, spec.master_seed, 0.0, s);
      ChannelPair design = channel;
      if (pc.cee_db) {
        Rng crng(derive_seed(spec.master_seed ^ 0x5eedc0de, *pc.cee_db, static_cast<std::uint64_t>(s)));
        design = chanmodel::corrupt_csi(channel, chanmodel::CorruptionSpec{*pc.cee_db, true}, crng);
      }
      for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
        const Method method = spec.methods[mi];
        const std::uint64_t mseed =
            derive_seed(spec.master_seed ^ (0x1000 + static_cast<std::uint64_t>(mi)), 0.0,
                        static_cast<std::uint64_t>(s));
        try {
          if (method == Method::Gmml || method == Method::Gml || method == Method::Ml) {
            gmml::GmmlHyper hy = pc.hyper;
            hy.mode = method == Method::Gmml ? gmml::Mode::Gmml
                     : method == Method::Gml ? gmml::Mode::Gml
                                             : gmml::Mode::Ml;
            Rng rng(mseed);
            const gmml::RunTrace trace = gmml::run(design, channel, pc.cfg, hy, rng);
            curve[mi][static_cast<std::size_t>(s)] = trace.best_se;
          } else {
            MethodOutcome out = run_method(method, design, channel, pc, mseed,
                                           spec.upper_bound_restarts);
            if (out.failed) throw std::runtime_error("method failed");
            flat[mi][static_cast<std::size_t>(s)] = out.se;
          }
        } catch (const std::exception&) {
          failed[mi][static_cast<std::size_t>(s)] = true;
        }
      }
    }

    for (double cp : checkpoints) {
      const std::size_t epoch = static_cast<std::size_t>(cp);
      for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
        ResultRow row;
        row.sweep_value = cp;
        row.method = method_name(spec.methods[mi]);
        double sum = 0.0, sum2 = 0.0;
        int n = 0, fails = 0;
        for (int s = 0; s < spec.samples; ++s) {
          if (failed[mi][static_cast<std::size_t>(s)]) {
            ++fails;
            continue;
          }
          double v;
          if (!curve[mi][static_cast<std::size_t>(s)].empty()) {
            const auto& c = curve[mi][static_cast<std::size_t>(s)];
            v = c[std::min(epoch == 0 ? 0 : epoch - 1, c.size() - 1)];
          } else {
            v = flat[mi][static_cast<std::size_t>(s)];
          }
          sum += v;
          sum2 += v * v;
          ++n;
        }
        row.sample_count = n;
        row.failures = fails;
        if (n > 0) row.mean_se = sum / n;
        if (n > 1) row.std_se = std::sqrt(std::max(0.0, (sum2 - sum * sum / n) / (n - 1)));
        table.rows.push_back(row);
      }
    }
    return table;
  }

  // Grid of (value, sample) tasks; every method consumes the identical
  // channel within a cell.
  const std::size_t n_values = spec.values.size();
  const std::size_t n_samples = static_cast<std::size_t>(spec.samples);
  std::vector<CellResult> cells(n_values * n_samples);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= cells.size()) return;
      const std::size_t vi = task / n_samples;
      const int s = static_cast<int>(task % n_samples);
      const double value = spec.values[vi];
      const PointConfig pc = point_config(spec, value);
      CellResult& cell = cells[task];
      cell.by_method.resize(spec.methods.size());
      try {
        const ChannelPair channel =
            make_channel(pc.cfg, spec.master_seed, pc.channel_seed_value, s);
        ChannelPair design = channel;
        if (pc.cee_db) {
          Rng crng(
              derive_seed(spec.master_seed ^ 0x5eedc0de, *pc.cee_db, static_cast<std::uint64_t>(s)));
          design =
              chanmodel::corrupt_csi(channel, chanmodel::CorruptionSpec{*pc.cee_db, true}, crng);
        }
        for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
          // Method randomness pairs across sweep points exactly as the
          // channel does.
          const std::uint64_t mseed =
              derive_seed(spec.master_seed ^ (0x1000 + static_cast<std::uint64_t>(mi)),
                          pc.channel_seed_value, static_cast<std::uint64_t>(s));
          cell.by_method[mi] = run_method(spec.methods[mi], design, channel, pc, mseed,
                                          spec.upper_bound_restarts);
        }
      } catch (const std::exception&) {
        for (auto& o : cell.by_method) o.failed = true;
      }
    }
  };

  unsigned n_workers = spec.workers > 0 ? static_cast<unsigned>(spec.workers)
                                        : std::max(1u, std::thread::hardware_concurrency());
  n_workers = std::min<unsigned>(n_workers, static_cast<unsigned>(cells.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ResultTable table;
  table.sweep = sweep_name(spec.sweep);
  for (std::size_t vi = 0; vi < n_values; ++vi) {
    for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
      ResultRow row;
      row.sweep_value = spec.values[vi];
      row.method = method_name(spec.methods[mi]);
      double sum = 0.0, sum2 = 0.0, tsum = 0.0;
      int n = 0, fails = 0;
      for (std::size_t s = 0; s < n_samples; ++s) {
        const MethodOutcome& o = cells[vi * n_samples + s].by_method[mi];
        if (o.failed) {
          ++fails;
          continue;
        }
        sum += o.se;
        sum2 += o.se * o.se;
        tsum += o.seconds;
        ++n;
      }
      row.sample_count = n;
      row.failures = fails;
      if (n > 0) {
        row.mean_se = sum / n;
        row.mean_time_s = tsum / n;
      }
      if (n > 1) row.std_se = std::sqrt(std::max(0.0, (sum2 - sum * sum / n) / (n - 1)));
      table.rows.push_back(row);
    }
  }
  return table;
}

std::vector<TimingRow> timing_profile(const TimingSpec& spec) {
  spec.base.validate();
  if (spec.repetitions < 1) throw std::invalid_argument("timing: repetitions must be >= 1");
  std::vector<TimingRow> rows;

  for (int m : spec.bs_antennas) {
    SystemConfig cfg = spec.base;
    cfg.num_bs_antennas = m;
    cfg.num_ris_elements = spec.ris_elements;
    cfg.num_users = spec.users;
    const ChannelPair channel = make_channel(cfg, spec.master_seed, static_cast<double>(m), 0);

    for (const char* method : {"GMML", "AO"}) {
      std::vector<double> times;
      for (int rep = -1; rep < spec.repetitions; ++rep) {  // rep -1 is the warm-up
        const std::uint64_t seed = derive_seed(spec.master_seed, static_cast<double>(m),
                                               static_cast<std::uint64_t>(rep + 1));
        const double t0 = now_seconds();
        if (std::string(method) == "GMML") {
          gmml::GmmlHyper hy = spec.hyper;
          hy.mode = gmml::Mode::Gmml;
          Rng rng(seed);
          (void)gmml::run(channel, channel, cfg, hy, rng);
        } else {
          Rng rng(seed);
          (void)baselines::ao(channel, cfg, rng);
        }
        if (rep >= 0) times.push_back(now_seconds() - t0);
      }
      std::sort(times.begin(), times.end());
      const double median = times[times.size() / 2];
      rows.push_back(TimingRow{m, spec.ris_elements, method, median});
    }
  }
  return rows;
}

std::string emit_to_string(const ResultTable& table, EmitFormat format) {
  if (format == EmitFormat::Csv) {
    std::ostringstream os;
    os << "sweep,value,method,mean_se,std_se,mean_time_s,samples,failures\n";
    for (const auto& r : table.rows) {
      os << table.sweep << ',' << fmt9(r.sweep_value) << ',' << r.method << ',' << fmt9(r.mean_se)
         << ',' << fmt9(r.std_se) << ',' << fmt9(r.mean_time_s) << ',' << r.sample_count << ','
         << r.failures << '\n';
    }
    return os.str();
  }
  nlohmann::json j;
  j["schema"] = "risopt-results-1";
  j["sweep"] = table.sweep;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : table.rows) {
    j["rows"].push_back({{"value", round9(r.sweep_value)},
                         {"method", r.method},
                         {"mean_se", round9(r.mean_se)},
                         {"std_se", round9(r.std_se)},
                         {"mean_time_s", round9(r.mean_time_s)},
                         {"samples", r.sample_count},
                         {"failures", r.failures}});
  }
  return j.dump(2) + "\n";
}

void emit(const ResultTable& table, const std::string& path, EmitFormat format) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("emit: cannot open " + path);
  os << emit_to_string(table, format);
  if (!os) throw std::runtime_error("emit: write failed for " + path);
}

ResultTable parse_result_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("parse_result_csv: empty input");
  if (line != "sweep,value,method,mean_se,std_se,mean_time_s,samples,failures")
    throw std::runtime_error("parse_result_csv: unexpected header: " + line);
  ResultTable table;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    ResultRow row;
    std::getline(ls, table.sweep, ',');
    std::getline(ls, tok, ',');
    row.sweep_value = std::strtod(tok.c_str(), nullptr);
    std::getline(ls, row.method, ',');
    std::getline(ls, tok, ',');
    row.mean_se = std::strtod(tok.c_str(), nullptr);
    std::getline(ls, tok, ',');
    row.std_se = std::strtod(tok.c_str(), nullptr);
    std::getline(ls, tok, ',');
    row.mean_time_s = std::strtod(tok.c_str(), nullptr);
    std::getline(ls, tok, ',');
    row.sample_count = std::atoi(tok.c_str());
    std::getline(ls, tok, ',');
    row.failures = std::atoi(tok.c_str());
    table.rows.push_back(row);
  }
  return table;
}

void emit_timing(const std::vector<TimingRow>& rows, const std::string& path, EmitFormat format) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("emit_timing: cannot open " + path);
  if (format == EmitFormat::Csv) {
    os << "bs_antennas,ris_elements,method,mean_seconds\n";
    for (const auto& r : rows)
      os << r.bs_antennas << ',' << r.ris_elements << ',' << r.method << ','
         << fmt9(r.mean_seconds) << '\n';
  } else {
    nlohmann::json j;
    j["schema"] = "risopt-timing-1";
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows)
      j["rows"].push_back({{"bs_antennas", r.bs_antennas},
                           {"ris_elements", r.ris_elements},
                           {"method", r.method},
                           {"mean_seconds", round9(r.mean_seconds)}});
    os << j.dump(2) << '\n';
  }
  if (!os) throw std::runtime_error("emit_timing: write failed for " + path);
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("loglog_slope: need matching vectors of length >= 2");
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace risopt::harness
