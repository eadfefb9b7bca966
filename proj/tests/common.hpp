#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

#include "gridtopo/gridtopo.hpp"

namespace testutil {

inline std::string fixture(const std::string& name) { return std::string(GRIDTOPO_SOURCE_DIR) + "/feeders/" + name; }

inline nlohmann::json fixture_json(const std::string& name) {
  std::ifstream in(fixture(name));
  return nlohmann::json::parse(in);
}

inline gridtopo::Network load(const std::string& name) { return gridtopo::parse_feeder(fixture(name)); }

/// Two buses joined by a single-phase line; handy for closed-form checks.
inline nlohmann::json two_bus_json(double r_ohm, double x_ohm, double p_kw, double q_kvar) {
  return {{"base", {{"kv", 4.16}, {"kva", 3000.0}, {"source_bus", "s"}, {"source_vpu", 1.0}}},
          {"buses", {{{"id", "s"}, {"phases", "a"}, {"kind", "source"}}, {{"id", "m"}, {"phases", "a"}, {"kind", "load"}}}},
          {"lines",
           {{{"id", "l"}, {"from_bus", "s"}, {"to_bus", "m"}, {"phases", "a"}, {"series_impedance", {{r_ohm, x_ohm}}}}}},
          {"switches", nlohmann::json::array()},
          {"loads",
           {{{"id", "d"}, {"bus_id", "m"}, {"phases", "a"}, {"nominal_p", {p_kw}}, {"nominal_q", {q_kvar}}}}}};
}

struct CliRun {
  int status = -1;
  std::string out;
};

/// Runs the command-line tool through the shell; stderr is discarded. `env`
/// is prepended as VAR=value assignments.
inline CliRun run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(GRIDTOPO_CLI) + " " + args + " 2>/dev/null";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testutil
