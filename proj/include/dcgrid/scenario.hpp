#ifndef DCGRID_SCENARIO_HPP
#define DCGRID_SCENARIO_HPP

#include <algorithm>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcgrid/errors.hpp"
#include "dcgrid/sim.hpp"

namespace dcgrid {

inline constexpr int kSchemaVersion = 1;

namespace detail {

using nlohmann::json;

inline const json& require(const json& j, const char* key, const char* where) {
  auto it = j.find(key);
  if (it == j.end())
    throw SchemaError(std::string(where) + ": missing field '" + key + "'");
  return *it;
}

inline double require_number(const json& j, const char* key, const char* where) {
  const json& v = require(j, key, where);
  if (!v.is_number())
    throw SchemaError(std::string(where) + ": field '" + key + "' must be a number");
  return v.get<double>();
}

inline int require_int(const json& j, const char* key, const char* where) {
  const json& v = require(j, key, where);
  if (!v.is_number_integer())
    throw SchemaError(std::string(where) + ": field '" + key + "' must be an integer");
  return v.get<int>();
}

inline std::string require_string(const json& j, const char* key, const char* where) {
  const json& v = require(j, key, where);
  if (!v.is_string())
    throw SchemaError(std::string(where) + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline int node_index(int id, int n, const char* where) {
  if (id < 1 || id > n)
    throw ValidationError(std::string(where) + ": node id " + std::to_string(id) +
                          " does not resolve (" + std::to_string(n) + " buses)");
  return id - 1;
}

}  // namespace detail

/// Parses and validates a scenario file. Schema problems raise
/// SchemaError; a well-formed file with an inconsistent model raises
/// ValidationError (or a subtype such as DisconnectedGraph).
inline ScenarioSpec parse_scenario_json(const nlohmann::json& j) {
  using detail::require;
  using detail::require_int;
  using detail::require_number;
  using detail::require_string;

  if (!j.is_object()) throw SchemaError("scenario: top level must be an object");
  if (require_int(j, "schema_version", "scenario") != kSchemaVersion)
    throw SchemaError("scenario: unsupported schema version");

  ScenarioSpec spec;
  spec.name = j.value("name", std::string());
  spec.description = j.value("description", std::string());

  const auto& jnet = require(j, "network", "scenario");
  spec.model.ratings.rated_voltage = require_number(jnet, "rated_voltage", "network");

  const auto& jbuses = require(jnet, "buses", "network");
  if (!jbuses.is_array() || jbuses.empty())
    throw SchemaError("network: 'buses' must be a non-empty array");
  const int n = static_cast<int>(jbuses.size());

  ElectricalNetwork& net = spec.model.net;
  net.n_bus = n;
  net.load_conductance.resize(n);
  net.filter_inductance.resize(n);
  net.filter_capacitance.resize(n);
  spec.model.ratings.current_capacity.resize(n);
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::vector<bool> file_critical(static_cast<std::size_t>(n), false);
  for (const auto& jb : jbuses) {
    const int idx = detail::node_index(require_int(jb, "id", "bus"), n, "bus");
    if (seen[static_cast<std::size_t>(idx)])
      throw ValidationError("bus: duplicate id " + std::to_string(idx + 1));
    seen[static_cast<std::size_t>(idx)] = true;
    const double r_load = require_number(jb, "load_resistance", "bus");
    if (r_load < 0.0) throw ValidationError("bus: negative load resistance");
    net.load_conductance(idx) = r_load > 0.0 ? 1.0 / r_load : 0.0;
    net.filter_inductance(idx) = require_number(jb, "filter_inductance", "bus");
    net.filter_capacitance(idx) = require_number(jb, "filter_capacitance", "bus");
    spec.model.ratings.current_capacity(idx) = require_number(jb, "current_capacity", "bus");
    const std::string cls = require_string(jb, "class", "bus");
    if (cls == "critical") file_critical[static_cast<std::size_t>(idx)] = true;
    else if (cls != "ordinary")
      throw SchemaError("bus: class must be 'critical' or 'ordinary'");
  }

  const auto& jlines = require(jnet, "lines", "network");
  if (!jlines.is_array()) throw SchemaError("network: 'lines' must be an array");
  const int m = static_cast<int>(jlines.size());
  net.n_line = m;
  net.incidence = Eigen::MatrixXd::Zero(n, m);
  net.line_resistance.resize(m);
  net.line_inductance.resize(m);
  for (int k = 0; k < m; ++k) {
    const auto& jl = jlines[static_cast<std::size_t>(k)];
    const int a = detail::node_index(require_int(jl, "from", "line"), n, "line");
    const int b = detail::node_index(require_int(jl, "to", "line"), n, "line");
    if (a == b) throw ValidationError("line: endpoints coincide");
    net.incidence(a, k) = 1.0;
    net.incidence(b, k) = -1.0;
    net.line_resistance(k) = require_number(jl, "resistance", "line");
    net.line_inductance(k) = require_number(jl, "inductance", "line");
  }

  const auto& jgraph = require(j, "graph", "scenario");
  spec.model.graph = CommGraph::complete_inactive(n);
  const auto& jedges = require(jgraph, "edges", "graph");
  if (!jedges.is_array()) throw SchemaError("graph: 'edges' must be an array");
  for (const auto& je : jedges) {
    if (!je.is_array() || je.size() != 3)
      throw SchemaError("graph: each edge must be [from, to, weight]");
    if (!je[0].is_number_integer() || !je[1].is_number_integer() || !je[2].is_number())
      throw SchemaError("graph: edge entries must be [int, int, number]");
    const int a = detail::node_index(je[0].get<int>(), n, "graph edge");
    const int b = detail::node_index(je[1].get<int>(), n, "graph edge");
    spec.model.graph.add_edge(a, b, je[2].get<double>());
  }
  std::vector<int> critical;
  if (jgraph.contains("critical")) {
    for (const auto& jc : jgraph["critical"]) {
      if (!jc.is_number_integer())
        throw SchemaError("graph: 'critical' must hold integer node ids");
      critical.push_back(detail::node_index(jc.get<int>(), n, "critical set"));
    }
  }
  for (int i = 0; i < n; ++i) {
    const bool in_set =
        std::find(critical.begin(), critical.end(), i) != critical.end();
    if (in_set != file_critical[static_cast<std::size_t>(i)])
      throw ValidationError("bus class and graph critical set disagree at node " +
                            std::to_string(i + 1));
  }

  const auto& jctrl = require(j, "controller", "scenario");
  const std::string mode = require_string(jctrl, "mode", "controller");
  if (mode == "uniform") {
    spec.model.mode = SharingMode::Uniform;
    if (!critical.empty())
      throw ValidationError("uniform mode does not take a critical set");
  } else if (mode == "critical") {
    spec.model.mode = SharingMode::Critical;
    spec.model.partition = NodePartition::from_critical(critical, n);
  } else {
    throw SchemaError("controller: mode must be 'uniform' or 'critical'");
  }
  spec.theta0 = require_number(jctrl, "theta", "controller");
  spec.omega0 = jctrl.value("omega", 1.0);
  spec.model.current_gain = jctrl.value("current_gain", 200.0);
  spec.model.voltage_gain = jctrl.value("voltage_gain", 10.0);

  const auto& jdroop = require(jctrl, "droop", "controller");
  const std::string policy = require_string(jdroop, "policy", "droop");
  spec.model.ratings.droop_coefficient.resize(n);
  if (policy == "rating_inverse") {
    const double fraction = require_number(jdroop, "fraction", "droop");
    if (fraction <= 0.0) throw ValidationError("droop: fraction must be positive");
    spec.model.ratings.droop_coefficient =
        fraction * spec.model.ratings.rated_voltage *
        spec.model.ratings.current_capacity.cwiseInverse();
  } else if (policy == "explicit") {
    const auto& jvals = require(jdroop, "values", "droop");
    if (!jvals.is_array() || static_cast<int>(jvals.size()) != n)
      throw SchemaError("droop: 'values' must list one coefficient per bus");
    for (int i = 0; i < n; ++i)
      spec.model.ratings.droop_coefficient(i) = jvals[static_cast<std::size_t>(i)].get<double>();
  } else {
    throw SchemaError("droop: policy must be 'rating_inverse' or 'explicit'");
  }

  if (j.contains("timeline")) {
    for (const auto& je : j["timeline"]) {
      Event ev;
      ev.time = require_number(je, "time", "timeline");
      const std::string kind = require_string(je, "event", "timeline");
      if (kind == "set_theta") {
        ev.type = Event::Type::SetTheta;
        ev.value = require_number(je, "value", "timeline");
      } else if (kind == "set_omega") {
        ev.type = Event::Type::SetOmega;
        ev.value = require_number(je, "value", "timeline");
      } else if (kind == "unplug_dg") {
        ev.type = Event::Type::UnplugDg;
        ev.node = detail::node_index(require_int(je, "node", "timeline"), n, "timeline");
        ev.relay_while_unplugged = je.value("relay_while_unplugged", true);
      } else if (kind == "plug_dg") {
        ev.type = Event::Type::PlugDg;
        ev.node = detail::node_index(require_int(je, "node", "timeline"), n, "timeline");
      } else if (kind == "set_load") {
        ev.type = Event::Type::SetLoad;
        ev.node = detail::node_index(require_int(je, "node", "timeline"), n, "timeline");
        ev.value = require_number(je, "resistance", "timeline");
      } else {
        throw SchemaError("timeline: unknown event '" + kind + "'");
      }
      spec.timeline.push_back(ev);
    }
  }

  const auto& jrun = require(j, "run", "scenario");
  spec.run.duration = require_number(jrun, "duration", "run");
  spec.run.dt = jrun.value("dt", 1e-6);
  spec.run.sample_interval = jrun.value("sample_interval", 1e-3);

  if (j.contains("analysis"))
    spec.gamma_v = j["analysis"].value("gamma_v", 0.05);

  spec.validate();
  return spec;
}

inline ScenarioSpec parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("scenario parse error: ") + e.what());
  }
  return parse_scenario_json(j);
}

/// Inverse of parse_scenario_json; parse(serialize(spec)) reproduces the
/// model exactly.
inline nlohmann::json serialize_scenario(const ScenarioSpec& spec) {
  using nlohmann::json;
  json j;
  j["schema_version"] = kSchemaVersion;
  j["name"] = spec.name;
  j["description"] = spec.description;

  const ElectricalNetwork& net = spec.model.net;
  json jbuses = json::array();
  std::vector<bool> is_cri(static_cast<std::size_t>(net.n_bus), false);
  if (spec.model.mode == SharingMode::Critical)
    for (int i : spec.model.partition.critical) is_cri[static_cast<std::size_t>(i)] = true;
  for (int i = 0; i < net.n_bus; ++i) {
    json jb;
    jb["id"] = i + 1;
    jb["load_resistance"] =
        net.load_conductance(i) > 0.0 ? 1.0 / net.load_conductance(i) : 0.0;
    jb["filter_inductance"] = net.filter_inductance(i);
    jb["filter_capacitance"] = net.filter_capacitance(i);
    jb["current_capacity"] = spec.model.ratings.current_capacity(i);
    jb["class"] = is_cri[static_cast<std::size_t>(i)] ? "critical" : "ordinary";
    jbuses.push_back(jb);
  }
  json jlines = json::array();
  for (int k = 0; k < net.n_line; ++k) {
    int a = -1, b = -1;
    for (int i = 0; i < net.n_bus; ++i) {
      if (net.incidence(i, k) == 1.0) a = i;
      if (net.incidence(i, k) == -1.0) b = i;
    }
    jlines.push_back({{"from", a + 1},
                      {"to", b + 1},
                      {"resistance", net.line_resistance(k)},
                      {"inductance", net.line_inductance(k)}});
  }
  j["network"] = {{"rated_voltage", spec.model.ratings.rated_voltage},
                  {"buses", jbuses},
                  {"lines", jlines}};

  json jedges = json::array();
  for (int i = 0; i < net.n_bus; ++i)
    for (int k = i + 1; k < net.n_bus; ++k)
      if (spec.model.graph.weights(i, k) > 0.0)
        jedges.push_back({i + 1, k + 1, spec.model.graph.weights(i, k)});
  json jgraph = {{"edges", jedges}};
  if (spec.model.mode == SharingMode::Critical) {
    json jcri = json::array();
    for (int i : spec.model.partition.critical) jcri.push_back(i + 1);
    jgraph["critical"] = jcri;
  }
  j["graph"] = jgraph;

  json jdroop = {{"policy", "explicit"},
                 {"values", std::vector<double>(
                                spec.model.ratings.droop_coefficient.data(),
                                spec.model.ratings.droop_coefficient.data() +
                                    spec.model.ratings.droop_coefficient.size())}};
  j["controller"] = {
      {"mode", spec.model.mode == SharingMode::Uniform ? "uniform" : "critical"},
      {"theta", spec.theta0},
      {"omega", spec.omega0},
      {"current_gain", spec.model.current_gain},
      {"voltage_gain", spec.model.voltage_gain},
      {"droop", jdroop}};

  json jtl = json::array();
  for (const auto& ev : spec.timeline) {
    json je;
    je["time"] = ev.time;
    switch (ev.type) {
      case Event::Type::SetTheta:
        je["event"] = "set_theta";
        je["value"] = ev.value;
        break;
      case Event::Type::SetOmega:
        je["event"] = "set_omega";
        je["value"] = ev.value;
        break;
      case Event::Type::UnplugDg:
        je["event"] = "unplug_dg";
        je["node"] = ev.node + 1;
        je["relay_while_unplugged"] = ev.relay_while_unplugged;
        break;
      case Event::Type::PlugDg:
        je["event"] = "plug_dg";
        je["node"] = ev.node + 1;
        break;
      case Event::Type::SetLoad:
        je["event"] = "set_load";
        je["node"] = ev.node + 1;
        je["resistance"] = ev.value;
        break;
    }
    jtl.push_back(je);
  }
  j["timeline"] = jtl;
  j["run"] = {{"duration", spec.run.duration},
              {"dt", spec.run.dt},
              {"sample_interval", spec.run.sample_interval}};
  j["analysis"] = {{"gamma_v", spec.gamma_v}};
  return j;
}

/// Trace CSV: one row per sample, fixed column order
/// t,V_1..V_N,I_1..I_N,Ipu_1..Ipu_N,est_1..est_N,theta,omega.
inline void write_trace_csv(const SimulationTrace& trace, int n_bus,
                            std::ostream& out) {
  out << "t";
  for (int i = 1; i <= n_bus; ++i) out << ",V_" << i;
  for (int i = 1; i <= n_bus; ++i) out << ",I_" << i;
  for (int i = 1; i <= n_bus; ++i) out << ",Ipu_" << i;
  for (int i = 1; i <= n_bus; ++i) out << ",est_" << i;
  out << ",theta,omega\n";
  out.precision(10);
  for (const auto& s : trace.samples) {
    out << s.t;
    for (int i = 0; i < n_bus; ++i) out << ',' << s.v_bus(i);
    for (int i = 0; i < n_bus; ++i) out << ',' << s.i_conv(i);
    for (int i = 0; i < n_bus; ++i) out << ',' << s.i_pu(i);
    for (int i = 0; i < n_bus; ++i) out << ',' << s.est(i);
    out << ',' << s.theta << ',' << s.omega << '\n';
  }
}

}  // namespace dcgrid

#endif
