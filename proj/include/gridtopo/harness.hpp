#pragma once

// Experiment driver: repeated seeded scenarios, estimation, correction and
// accuracy aggregation, written out as CSV.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridtopo/inference.hpp"
#include "gridtopo/measurement.hpp"
#include "gridtopo/netmodel.hpp"
#include "gridtopo/parallel.hpp"
#include "gridtopo/powerflow.hpp"
#include "gridtopo/twostage.hpp"

namespace gridtopo {

/// Multiplies the resistive part of every series impedance by `factor`.
inline Network scale_rx(const Network& net, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw ConfigError("rx_scale must be > 0");
  if (factor == 1.0) return net;
  FeederData d = net.data();
  for (auto& l : d.lines) {
    auto& z = l.series_impedance;
    for (Eigen::Index r = 0; r < z.rows(); ++r)
      for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = cplx(z(r, c).real() * factor, z(r, c).imag());
  }
  return Network::build(std::move(d));
}

/// Fixed vector, or every repetition opens `random_open` distinct switches
/// chosen uniformly (all others closed).
struct TruthSpec {
  std::optional<SwitchVector> fixed;
  std::size_t random_open = 0;

  SwitchVector generate(std::size_t ns, std::uint64_t seed) const {
    if (fixed) return *fixed;
    if (random_open > ns) throw ConfigError("truth.random_open exceeds the switch count");
    std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
    const auto open = choose_meters(ns, ns == 0 ? 0.0 : double(random_open) / double(ns), rng);
    std::vector<std::uint8_t> bits(ns, 1);
    for (auto i : open) bits[i] = 0;
    return SwitchVector(std::move(bits));
  }
};

/// One CSV row's worth of settings.
struct VariantConfig {
  std::size_t samples = 1000;
  std::size_t iterations = 6;
  LikelihoodMode mode = LikelihoodMode::robust;
  double meter_sigma = 0.01;
  double forecast_sigma = 0.05;
  double meter_ratio = 0.3;
  double rx_scale = 1.0;
};

struct ExperimentConfig {
  std::string feeder;  // path
  TruthSpec truth;
  std::size_t repetitions = 100;
  std::uint64_t seed = 1;
  std::vector<VariantConfig> variants{VariantConfig{}};
  std::string output;  // directory; empty = no files
  std::size_t workers = 1;
  bool timing = false;  // wall time makes the CSV non-reproducible
  PowerFlowOptions pf;

  void validate() const {
    if (feeder.empty()) throw ConfigError("experiment: feeder path is required");
    if (repetitions < 1) throw ConfigError("experiment: repetitions must be >= 1");
    if (workers < 1) throw ConfigError("experiment: workers must be >= 1");
    if (variants.empty()) throw ConfigError("experiment: no variants");
    for (const auto& v : variants) {
      if (!(v.rx_scale > 0.0)) throw ConfigError("experiment: rx_scale must be > 0");
      if (v.samples < 1 || v.iterations < 1) throw ConfigError("experiment: samples and iterations must be >= 1");
      MeasurementConfig{v.meter_ratio, v.meter_sigma, v.forecast_sigma, 1}.validate();
    }
  }
};

namespace detail {

inline void read_variant(const nlohmann::json& j, VariantConfig& v) {
  if (j.contains("samples")) v.samples = j["samples"].get<std::size_t>();
  if (j.contains("iterations")) v.iterations = j["iterations"].get<std::size_t>();
  if (j.contains("mode")) v.mode = parse_mode(j["mode"].get<std::string>());
  if (j.contains("meter_sigma")) v.meter_sigma = j["meter_sigma"].get<double>();
  if (j.contains("forecast_sigma")) v.forecast_sigma = j["forecast_sigma"].get<double>();
  if (j.contains("meter_ratio")) v.meter_ratio = j["meter_ratio"].get<double>();
  if (j.contains("rx_scale")) v.rx_scale = j["rx_scale"].get<double>();
}

}  // namespace detail

/// Top-level keys: feeder, truth (string or {"random_open": k}), repetitions,
/// seed, output, workers, pf_tolerance, pf_max_iterations, plus defaults for
/// any variant field. "variants" is a list of per-row overrides.
/// Relative paths resolve against `base_dir`.
inline ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  ExperimentConfig cfg;
  try {
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path path(p);
      return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).string();
    };
    cfg.feeder = resolve(detail::require(j, "feeder", "experiment").get<std::string>());
    const auto& t = detail::require(j, "truth", "experiment");
    if (t.is_string()) cfg.truth.fixed = SwitchVector::parse(t.get<std::string>());
    else if (t.is_object() && t.contains("random_open")) cfg.truth.random_open = t["random_open"].get<std::size_t>();
    else throw ConfigError("experiment.truth: expected a 0/1 string or {\"random_open\": k}");
    if (j.contains("repetitions")) cfg.repetitions = j["repetitions"].get<std::size_t>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("output")) cfg.output = resolve(j["output"].get<std::string>());
    if (j.contains("workers")) cfg.workers = j["workers"].get<std::size_t>();
    if (j.contains("timing")) cfg.timing = j["timing"].get<bool>();
    if (j.contains("pf_tolerance")) cfg.pf.tolerance = j["pf_tolerance"].get<double>();
    if (j.contains("pf_max_iterations")) cfg.pf.max_iterations = j["pf_max_iterations"].get<std::size_t>();
    VariantConfig base;
    detail::read_variant(j, base);
    cfg.variants.clear();
    if (j.contains("variants")) {
      for (const auto& vj : j["variants"]) {
        VariantConfig v = base;
        detail::read_variant(vj, v);
        cfg.variants.push_back(v);
      }
    } else {
      cfg.variants.push_back(base);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("experiment: invalid JSON: ") + e.what());
  }
  return experiment_from_json(j, std::filesystem::path(path).parent_path());
}

struct RepetitionOutcome {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  SwitchVector truth, b_hat;
  double rho1 = 0.0, rho2 = 0.0;
  std::vector<double> trace;  // first-stage accuracy per iteration
};

struct VariantReport {
  VariantConfig config;
  double time_s = 0.0;
  double rho1 = 0.0, rho2 = 0.0;  // means over successful repetitions
  std::size_t fail_count = 0;
  std::vector<double> trace;  // mean per iteration, then the corrected point
  std::vector<RepetitionOutcome> repetitions;
};

struct ExperimentReport {
  std::vector<VariantReport> variants;
  bool timing = false;
};

/// Seed of repetition i; the inference stream is derived from it so that
/// meters/noise and sampling never share a generator state.
inline std::uint64_t repetition_seed(std::uint64_t base, std::size_t i) { return base + i; }
inline std::uint64_t inference_seed(std::uint64_t rep_seed) { return rep_seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL; }

inline RepetitionOutcome run_repetition(const std::shared_ptr<const Network>& net, const ExperimentConfig& cfg,
                                        const VariantConfig& v, std::size_t index) {
  RepetitionOutcome out;
  out.seed = repetition_seed(cfg.seed, index);
  out.truth = cfg.truth.generate(net->switch_count(), out.seed);
  check_switch_length(*net, out.truth);
  try {
    const MeasurementConfig mc{v.meter_ratio, v.meter_sigma, v.forecast_sigma, out.seed};
    const auto ms = simulate(*net, out.truth, nominal_injections(*net), mc, cfg.pf);
    InferenceConfig ic;
    ic.samples = v.samples;
    ic.iterations = v.iterations;
    ic.mode = v.mode;
    ic.seed = inference_seed(out.seed);
    const auto res = run_ais(net, ms, ic, cfg.pf);
    const auto corrected = correct(*net, res);
    out.b_hat = res.b_hat;
    out.rho1 = accuracy(*net, out.truth, corrected, Stage::first);
    out.rho2 = accuracy(*net, out.truth, corrected, Stage::second);
    for (const auto& d : res.diagnostics)
      out.trace.push_back(accuracy(*net, out.truth, correct(*net, d.b_hat, res.s_hat), Stage::first));
  } catch (const NumericalError& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

inline ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Network base = parse_feeder(cfg.feeder);
  ExperimentReport report;
  report.timing = cfg.timing;
  for (const auto& v : cfg.variants) {
    auto net = std::make_shared<const Network>(scale_rx(base, v.rx_scale));
    VariantReport vr;
    vr.config = v;
    vr.repetitions.resize(cfg.repetitions);
    const auto t0 = std::chrono::steady_clock::now();
    parallel_for(cfg.repetitions, cfg.workers,
                 [&](std::size_t i) { vr.repetitions[i] = run_repetition(net, cfg, v, i); });
    if (cfg.timing) vr.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    vr.trace.assign(v.iterations + 1, 0.0);
    std::size_t ok = 0;
    for (const auto& r : vr.repetitions) {
      if (r.failed) {
        ++vr.fail_count;
        continue;
      }
      ++ok;
      vr.rho1 += r.rho1;
      vr.rho2 += r.rho2;
      for (std::size_t j = 0; j < r.trace.size(); ++j) vr.trace[j] += r.trace[j];
      vr.trace[v.iterations] += r.rho2;
    }
    if (ok > 0) {
      vr.rho1 /= double(ok);
      vr.rho2 /= double(ok);
      for (auto& x : vr.trace) x /= double(ok);
    }
    report.variants.push_back(std::move(vr));
  }
  return report;
}

namespace detail {
inline std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}
}  // namespace detail

/// Accuracies in percent.
inline void write_results_csv(const ExperimentReport& rep, std::ostream& out) {
  out << "samples,iterations,meter_sigma,forecast_sigma,meter_ratio,rx_scale,time_s,rho1,rho2,fail_count\n";
  for (const auto& v : rep.variants) {
    const auto& c = v.config;
    out << c.samples << ',' << c.iterations << ',' << detail::fmt("%g", c.meter_sigma) << ','
        << detail::fmt("%g", c.forecast_sigma) << ',' << detail::fmt("%g", c.meter_ratio) << ','
        << detail::fmt("%g", c.rx_scale) << ',' << detail::fmt("%.3f", v.time_s) << ','
        << detail::fmt("%.4f", 100.0 * v.rho1) << ',' << detail::fmt("%.4f", 100.0 * v.rho2) << ',' << v.fail_count
        << '\n';
  }
}

/// Convergence trace: points 1..j_max are first-stage accuracy after each
/// iteration, point j_max+1 the corrected accuracy.
inline void write_trace_csv(const ExperimentReport& rep, std::ostream& out) {
  out << "variant,point,stage,rho\n";
  for (std::size_t vi = 0; vi < rep.variants.size(); ++vi) {
    const auto& tr = rep.variants[vi].trace;
    for (std::size_t p = 0; p < tr.size(); ++p)
      out << vi << ',' << p + 1 << ',' << (p + 1 < tr.size() ? "first" : "second") << ','
          << detail::fmt("%.4f", 100.0 * tr[p]) << '\n';
  }
}

inline void write_repetitions_csv(const ExperimentReport& rep, std::ostream& out) {
  out << "variant,repetition,seed,truth,b_hat,rho1,rho2,failed\n";
  for (std::size_t vi = 0; vi < rep.variants.size(); ++vi) {
    const auto& reps = rep.variants[vi].repetitions;
    for (std::size_t i = 0; i < reps.size(); ++i) {
      const auto& r = reps[i];
      out << vi << ',' << i << ',' << r.seed << ',' << r.truth.str() << ',' << (r.failed ? "" : r.b_hat.str()) << ','
          << detail::fmt("%.4f", 100.0 * r.rho1) << ',' << detail::fmt("%.4f", 100.0 * r.rho2) << ','
          << (r.failed ? 1 : 0) << '\n';
    }
  }
}

/// Writes results.csv, trace.csv and repetitions.csv into `dir`.
inline void write_report(const ExperimentReport& rep, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream f(std::filesystem::path(dir) / name);
    if (!f) throw ConfigError("cannot write '" + (std::filesystem::path(dir) / name).string() + "'");
    return f;
  };
  {
    auto f = open("results.csv");
    write_results_csv(rep, f);
  }
  {
    auto f = open("trace.csv");
    write_trace_csv(rep, f);
  }
  auto f = open("repetitions.csv");
  write_repetitions_csv(rep, f);
}

}  // namespace gridtopo
