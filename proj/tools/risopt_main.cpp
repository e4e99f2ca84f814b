// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end for the experiment harness. Subcommands map to
// the figure-style sweeps; all of them accept a JSON config file plus a
// few common overrides and emit a CSV or JSON result table.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "risopt/harness.hpp"

namespace {

using nlohmann::json;
using risopt::harness::EmitFormat;
using risopt::harness::ExperimentSpec;
using risopt::harness::Method;
using risopt::harness::SweepKind;

void apply_system(const json& j, risopt::chanmodel::SystemConfig& cfg) {
  if (j.contains("bs_antennas")) cfg.num_bs_antennas = j["bs_antennas"].get<int>();
  if (j.contains("ris_elements")) cfg.num_ris_elements = j["ris_elements"].get<int>();
  if (j.contains("users")) cfg.num_users = j["users"].get<int>();
  if (j.contains("transmit_power_dbm"))
    cfg.transmit_power_w = risopt::dbm_to_watts(j["transmit_power_dbm"].get<double>());
  if (j.contains("noise_power_dbm"))
    cfg.noise_power_w = risopt::dbm_to_watts(j["noise_power_dbm"].get<double>());
  if (j.contains("user_weights")) cfg.user_weights = j["user_weights"].get<std::vector<double>>();
  if (j.contains("carrier_ghz")) cfg.carrier_freq_hz = j["carrier_ghz"].get<double>() * 1e9;
  auto vec2 = [](const json& v) {
    return risopt::Vec2{v.at(0).get<double>(), v.at(1).get<double>()};
  };
  if (j.contains("bs_pos")) cfg.bs_pos = vec2(j["bs_pos"]);
  if (j.contains("ris_pos")) cfg.ris_pos = vec2(j["ris_pos"]);
  if (j.contains("user_center")) cfg.user_center = vec2(j["user_center"]);
  if (j.contains("user_radius_m")) cfg.user_radius_m = j["user_radius_m"].get<double>();
  if (j.contains("rician_h")) cfg.rician_h = j["rician_h"].get<double>();
  if (j.contains("rician_g")) cfg.rician_g = j["rician_g"].get<double>();
  if (j.contains("antenna_spacing")) cfg.antenna_spacing = j["antenna_spacing"].get<double>();
}

void apply_gmml(const json& j, risopt::gmml::GmmlHyper& hy) {
  if (j.contains("epochs")) hy.epochs = j["epochs"].get<int>();
  if (j.contains("outer_steps")) hy.outer_steps = j["outer_steps"].get<int>();
  if (j.contains("inner_steps")) hy.inner_steps = j["inner_steps"].get<int>();
  if (j.contains("lr_x")) hy.lr_x = j["lr_x"].get<double>();
  if (j.contains("lr_theta")) hy.lr_theta = j["lr_theta"].get<double>();
  if (j.contains("regulator_lambda")) hy.regulator_lambda = j["regulator_lambda"].get<double>();
  if (j.contains("tn_update_interval")) hy.tn_update_interval = j["tn_update_interval"].get<int>();
  if (j.contains("hidden_neurons")) hy.hidden_neurons = j["hidden_neurons"].get<int>();
  if (j.contains("hidden_layers")) hy.hidden_layers = j["hidden_layers"].get<int>();
}

void apply_experiment(const json& j, ExperimentSpec& spec) {
  if (j.contains("values")) spec.values = j["values"].get<std::vector<double>>();
  if (j.contains("samples")) spec.samples = j["samples"].get<int>();
  if (j.contains("seed")) spec.master_seed = j["seed"].get<std::uint64_t>();
  if (j.contains("upper_bound_restarts"))
    spec.upper_bound_restarts = j["upper_bound_restarts"].get<int>();
  if (j.contains("workers")) spec.workers = j["workers"].get<int>();
  if (j.contains("cee_db") && !j["cee_db"].is_null()) spec.cee_db = j["cee_db"].get<double>();
  if (j.contains("methods")) {
    spec.methods.clear();
    for (const auto& name : j["methods"])
      spec.methods.push_back(risopt::harness::parse_method(name.get<std::string>()));
  }
}

void load_config(const std::string& path, ExperimentSpec& spec) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  json j;
  is >> j;
  if (j.contains("system")) apply_system(j["system"], spec.base);
  if (j.contains("gmml")) apply_gmml(j["gmml"], spec.hyper);
  if (j.contains("experiment")) apply_experiment(j["experiment"], spec);
}

std::vector<Method> parse_method_list(const std::string& csv) {
  std::vector<Method> out;
  std::string cur;
  for (char c : csv + ",") {
    if (c == ',') {
      if (!cur.empty()) out.push_back(risopt::harness::parse_method(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

int emit_and_report(const risopt::harness::ResultTable& table, const std::string& out_path,
                    EmitFormat format) {
  risopt::harness::emit(table, out_path, format);
  int failures = 0;
  for (const auto& r : table.rows) {
    if (r.failures > 0) {
      failures += r.failures;
      std::fprintf(stderr, "FAIL %s value=%g method=%s: %d of %d samples failed\n",
                   table.sweep.c_str(), r.sweep_value, r.method.c_str(), r.failures,
                   r.failures + r.sample_count);
    }
  }
  std::printf("wrote %s (%zu rows)\n", out_path.c_str(), table.rows.size());
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RIS-aided beamforming simulation and optimization toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path = "results.csv";
  std::string format_name = "csv";
  std::string methods_csv;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int samples = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--out", out_path, "output path");
    cmd->add_option("--format", format_name, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--methods", methods_csv, "comma-separated method list");
    cmd->add_option("--seed", seed, "master seed")->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--samples", samples, "number of channel samples N_s");
  };

  auto* c_power = app.add_subcommand("sweep-power", "SE vs transmit power (dBm)");
  auto* c_ris = app.add_subcommand("sweep-ris", "SE vs RIS element count");
  auto* c_ant = app.add_subcommand("sweep-antennas", "SE vs BS antenna count");
  auto* c_cee = app.add_subcommand("sweep-cee", "SE vs channel estimation error (dB)");
  auto* c_conv = app.add_subcommand("convergence", "best SE vs epoch checkpoints");
  auto* c_nn = app.add_subcommand("nn-size", "SE vs network width or depth");
  auto* c_time = app.add_subcommand("timing", "wall-clock scaling of GMML and AO");
  for (auto* c : {c_power, c_ris, c_ant, c_cee, c_conv, c_nn, c_time}) add_common(c);

  std::string nn_vary = "width";
  c_nn->add_option("--vary", nn_vary, "width or depth")->check(CLI::IsMember({"width", "depth"}));

  std::vector<int> timing_antennas{32, 64, 128, 256};
  int timing_ris = 100;
  int timing_reps = 3;
  c_time->add_option("--antennas", timing_antennas, "BS antenna counts");
  c_time->add_option("--ris", timing_ris, "RIS element count");
  c_time->add_option("--reps", timing_reps, "repetitions per point (median reported)");

  CLI11_PARSE(app, argc, argv);

  try {
    const EmitFormat format = format_name == "json" ? EmitFormat::Json : EmitFormat::Csv;

    if (c_time->parsed()) {
      risopt::harness::TimingSpec tspec;
      tspec.bs_antennas = timing_antennas;
      tspec.ris_elements = timing_ris;
      tspec.repetitions = timing_reps;
      if (!config_path.empty()) {
        ExperimentSpec tmp;
        load_config(config_path, tmp);
        tspec.base = tmp.base;
        tspec.hyper = tmp.hyper;
        tspec.master_seed = tmp.master_seed;
      }
      if (seed_set) tspec.master_seed = seed;
      const auto rows = risopt::harness::timing_profile(tspec);
      risopt::harness::emit_timing(rows, out_path, format);
      std::printf("wrote %s (%zu rows)\n", out_path.c_str(), rows.size());
      return 0;
    }

    ExperimentSpec spec;
    if (c_power->parsed()) {
      spec.sweep = SweepKind::Power;
      spec.values = {0, 2, 4, 6, 8, 10};
    } else if (c_ris->parsed()) {
      spec.sweep = SweepKind::RisElements;
      spec.values = {40, 70, 100, 130, 160};
    } else if (c_ant->parsed()) {
      spec.sweep = SweepKind::Antennas;
      spec.values = {32, 64, 128, 256};
    } else if (c_cee->parsed()) {
      spec.sweep = SweepKind::Cee;
      spec.values = {-20, -15, -10, -5, 0};
    } else if (c_conv->parsed()) {
      spec.sweep = SweepKind::Convergence;
      spec.values = {1, 100, 200, 300, 400, 500};
      spec.methods = {Method::Gmml, Method::Gml, Method::Ao};
    } else if (c_nn->parsed()) {
      spec.sweep = nn_vary == "depth" ? SweepKind::Depth : SweepKind::Width;
      spec.values = nn_vary == "depth" ? std::vector<double>{1, 2, 3, 4}
                                       : std::vector<double>{25, 50, 100, 200, 400};
      spec.methods = {Method::Gmml};
    }

    if (!config_path.empty()) load_config(config_path, spec);
    if (seed_set) spec.master_seed = seed;
    if (samples > 0) spec.samples = samples;
    if (!methods_csv.empty()) spec.methods = parse_method_list(methods_csv);

    const auto table = risopt::harness::run_experiment(spec);
    return emit_and_report(table, out_path, format);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
