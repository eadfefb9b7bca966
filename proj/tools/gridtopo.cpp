// Command-line front end: simulate, estimate, experiment, oracle, ybus.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridtopo/gridtopo.hpp"

using namespace gridtopo;
using nlohmann::json;

namespace {

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

std::size_t resolve_workers(const std::optional<std::size_t>& flag) {
  if (flag) {
    if (*flag < 1) throw ConfigError("--workers must be >= 1");
    return *flag;
  }
  return workers_from_env(1);
}

json diagnostics_json(const std::vector<IterationDiagnostics>& diag) {
  json out = json::array();
  for (const auto& d : diag)
    out.push_back({{"iteration", d.iteration},
                   {"ess", d.ess},
                   {"finite", d.finite},
                   {"redrawn", d.redrawn},
                   {"best_log_posterior", std::isfinite(d.best_log_posterior) ? json(d.best_log_posterior) : json()},
                   {"p_closed", d.p_closed},
                   {"b_hat", d.b_hat.str()}});
  return out;
}

PowerFlowOptions pf_options(double tol, std::size_t max_iter) {
  PowerFlowOptions pf;
  pf.tolerance = tol;
  pf.max_iterations = max_iter;
  if (!(tol > 0.0)) throw ConfigError("--pf-tol must be > 0");
  if (max_iter < 1) throw ConfigError("--pf-max-iter must be >= 1");
  return pf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topology and outage estimation for unbalanced distribution feeders"};
  app.require_subcommand(1);

  double pf_tol = 1e-8;
  std::size_t pf_max_iter = 100;
  app.add_option("--pf-tol", pf_tol, "Power-flow mismatch tolerance (pu)");
  app.add_option("--pf-max-iter", pf_max_iter, "Power-flow iteration cap");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a measurement scenario");
  std::string sim_feeder, sim_truth, sim_out;
  MeasurementConfig mc;
  sim->add_option("feeder", sim_feeder, "Feeder JSON")->required();
  sim->add_option("--truth", sim_truth, "True switch vector, e.g. 1101")->required();
  sim->add_option("--meter-ratio", mc.meter_ratio, "Fraction of loads with meters");
  sim->add_option("--meter-sigma", mc.meter_sigma, "Relative meter noise");
  sim->add_option("--forecast-sigma", mc.forecast_sigma, "Relative forecast error");
  sim->add_option("--seed", mc.rng_seed, "Scenario seed");
  sim->add_option("--out", sim_out, "Output file (default stdout)");

  // estimate
  auto* est = app.add_subcommand("estimate", "Estimate switch statuses from a scenario");
  std::string est_feeder, est_scenario, est_out, est_mode = "robust";
  InferenceConfig ic;
  std::optional<std::size_t> est_workers;
  est->add_option("feeder", est_feeder, "Feeder JSON")->required();
  est->add_option("--scenario", est_scenario, "Scenario JSON")->required();
  est->add_option("--samples", ic.samples, "Samples per iteration");
  est->add_option("--iterations", ic.iterations, "Adaptation iterations");
  est->add_option("--mode", est_mode, "Likelihood: robust or naive");
  est->add_option("--seed", ic.seed, "Sampler seed");
  est->add_option("--workers", est_workers, "Worker threads");
  est->add_option("--out", est_out, "result.json path (default stdout)");

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run a repeated experiment from a config file");
  std::string exp_config, exp_out, exp_mode;
  std::optional<std::size_t> exp_reps, exp_workers, exp_samples, exp_iters;
  std::optional<std::uint64_t> exp_seed;
  bool exp_timing = false;
  exp->add_option("config", exp_config, "Experiment JSON")->required();
  exp->add_option("--out", exp_out, "Output directory (overrides the config)");
  exp->add_option("--repetitions", exp_reps, "Repetitions per variant");
  exp->add_option("--seed", exp_seed, "Base seed");
  exp->add_option("--samples", exp_samples, "Samples per iteration, all variants");
  exp->add_option("--iterations", exp_iters, "Iterations, all variants");
  exp->add_option("--mode", exp_mode, "Likelihood mode, all variants");
  exp->add_option("--workers", exp_workers, "Worker threads");
  exp->add_flag("--timing", exp_timing, "Record wall time (output no longer reproducible)");

  // oracle
  auto* orc = app.add_subcommand("oracle", "Rank every switch vector at fixed injections");
  std::string orc_feeder, orc_scenario, orc_out, orc_mode = "robust", orc_inj = "forecast";
  std::size_t orc_top = 0;
  std::optional<std::size_t> orc_workers;
  orc->add_option("feeder", orc_feeder, "Feeder JSON")->required();
  orc->add_option("--scenario", orc_scenario, "Scenario JSON")->required();
  orc->add_option("--mode", orc_mode, "Likelihood: robust or naive");
  orc->add_option("--injections", orc_inj, "forecast or truth");
  orc->add_option("--top", orc_top, "Only the best N rows (0 = all)");
  orc->add_option("--workers", orc_workers, "Worker threads");
  orc->add_option("--out", orc_out, "CSV path (default stdout)");

  // ybus
  auto* yb = app.add_subcommand("ybus", "Dump the assembled admittance matrix");
  std::string yb_feeder, yb_switches, yb_out;
  yb->add_option("feeder", yb_feeder, "Feeder JSON")->required();
  yb->add_option("--switches", yb_switches, "Switch vector (default: file statuses)");
  yb->add_option("--out", yb_out, "Output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const auto pf = pf_options(pf_tol, pf_max_iter);

    if (*sim) {
      const auto net = parse_feeder(sim_feeder);
      const auto truth = SwitchVector::parse(sim_truth);
      check_switch_length(net, truth);
      const auto sc = make_scenario(net, truth, nominal_injections(net), mc, pf);
      emit(scenario_to_json(net, sc).dump(1) + "\n", sim_out);
    } else if (*est) {
      auto net = std::make_shared<const Network>(parse_feeder(est_feeder));
      const auto sc = load_scenario(*net, est_scenario);
      ic.mode = parse_mode(est_mode);
      ic.workers = resolve_workers(est_workers);
      EstimationResult res;
      try {
        res = run_ais(net, sc.measurements, ic, pf);
      } catch (const DegenerateEnsembleError& e) {
        std::cerr << "diagnostics: " << diagnostics_json(e.diagnostics).dump() << '\n';
        throw;
      }
      const auto cor = correct(*net, res);
      json j = {{"b_hat", cor.b_hat.str()},
                {"p_bino", res.p_bino},
                {"low_confidence", res.low_confidence},
                {"inestimable", cor.inestimable},
                {"s_hat", {{"p", cor.s_hat.p}, {"q", cor.s_hat.q}}},
                {"map", {{"b", res.map.b.str()}, {"log_posterior", res.map.log_posterior}}},
                {"settings",
                 {{"samples", ic.samples}, {"iterations", ic.iterations}, {"mode", mode_name(ic.mode)}, {"seed", ic.seed}}},
                {"diagnostics", diagnostics_json(res.diagnostics)}};
      j["accuracy"] = {{"rho1", accuracy(*net, sc.truth, cor, Stage::first)},
                       {"rho2", accuracy(*net, sc.truth, cor, Stage::second)}};
      emit(j.dump(1) + "\n", est_out);
    } else if (*exp) {
      auto cfg = load_experiment(exp_config);
      if (!exp_out.empty()) cfg.output = exp_out;
      if (exp_reps) cfg.repetitions = *exp_reps;
      if (exp_seed) cfg.seed = *exp_seed;
      if (exp_timing) cfg.timing = true;
      cfg.workers = exp_workers ? resolve_workers(exp_workers) : workers_from_env(cfg.workers);
      cfg.pf = pf;
      for (auto& v : cfg.variants) {
        if (exp_samples) v.samples = *exp_samples;
        if (exp_iters) v.iterations = *exp_iters;
        if (!exp_mode.empty()) v.mode = parse_mode(exp_mode);
      }
      const auto rep = run_experiment(cfg);
      if (cfg.output.empty()) {
        write_results_csv(rep, std::cout);
      } else {
        write_report(rep, cfg.output);
        std::ostringstream csv;
        write_results_csv(rep, csv);
        std::cout << csv.str();
      }
    } else if (*orc) {
      auto net = std::make_shared<const Network>(parse_feeder(orc_feeder));
      const auto sc = load_scenario(*net, orc_scenario);
      InjectionState s;
      if (orc_inj == "forecast") s = forecast_injections(*net, sc.measurements);
      else if (orc_inj == "truth") s = sc.injections;
      else throw ConfigError("--injections must be forecast or truth");
      const auto ranking =
          exhaustive_map(net, sc.measurements, s, parse_mode(orc_mode), resolve_workers(orc_workers), pf);
      std::ostringstream csv;
      csv << "rank,b,log_posterior\n";
      const auto n = orc_top == 0 ? ranking.size() : std::min(orc_top, ranking.size());
      char buf[64];
      for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", ranking[i].log_posterior);
        csv << ranking[i].rank << ',' << ranking[i].b.str() << ',' << buf << '\n';
      }
      emit(csv.str(), orc_out);
    } else if (*yb) {
      const auto net = parse_feeder(yb_feeder);
      const auto b = yb_switches.empty() ? net.default_switches() : SwitchVector::parse(yb_switches);
      const auto y = assemble(net, b);
      std::ostringstream out;
      out << "# terminals " << y.dimension() << '\n';
      for (std::size_t i = 0; i < y.dimension(); ++i)
        out << "# " << i << ' ' << y.terminals[i].first << '.' << phase_char(y.terminals[i].second) << '\n';
      dump_coordinates(y, out);
      emit(out.str(), yb_out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
