#pragma once

// JSON file formats for the durable artifacts of a calibration run:
// network topologies, hydraulic models and fit reports.
//
// Topology files carry `nodes`, `root`, `edges` and the authoritative
// `consumers` order.  Model files carry the topology (inline, or as a
// path relative to the model file), per-edge pipe resistances keyed by
// edge id, the shared ramp basis, per-valve sparse weights keyed by
// basis index, and the hysteresis deadband.  Every numeric value is
// written with enough digits to reload bit-identically.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "dhcal/calibrate.hpp"
#include "dhcal/components.hpp"
#include "dhcal/errors.hpp"
#include "dhcal/network.hpp"

namespace dhcal {

inline constexpr int kTopologyFormatVersion = 1;
inline constexpr int kModelFormatVersion = 1;
inline constexpr int kFitReportFormatVersion = 1;

namespace io_detail {

inline nlohmann::json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in.good())
    throw DataError("cannot open '" + path.string() + "' for reading");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_file(const std::filesystem::path& path,
                       const nlohmann::json& j) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out.good())
    throw DataError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
}

inline void expect_format(const nlohmann::json& j, const std::string& format,
                          int version, const std::string& what) {
  if (!j.is_object()) throw DataError(what + ": top level must be an object");
  if (!j.contains("format") || j["format"] != format)
    throw DataError(what + ": missing or wrong \"format\" (expected \"" +
                    format + "\")");
  if (!j.contains("version") || !j["version"].is_number_integer() ||
      j["version"].get<int>() != version)
    throw DataError(what + ": unsupported \"version\" (expected " +
                    std::to_string(version) + ")");
}

inline const nlohmann::json& require(const nlohmann::json& j,
                                     const std::string& key,
                                     const std::string& what) {
  if (!j.contains(key))
    throw DataError(what + ": missing required field \"" + key + "\"");
  return j[key];
}

inline double require_number(const nlohmann::json& j, const std::string& key,
                             const std::string& what) {
  const auto& v = require(j, key, what);
  if (!v.is_number())
    throw DataError(what + ": field \"" + key + "\" must be a number");
  return v.get<double>();
}

}  // namespace io_detail

// --- topologies ------------------------------------------------------------

inline nlohmann::json topology_to_json(const NetworkTopology& t) {
  nlohmann::json j;
  j["format"] = "dhcal-topology";
  j["version"] = kTopologyFormatVersion;
  j["nodes"] = t.nodes;
  j["root"] = t.root;
  auto edges = nlohmann::json::array();
  for (const EdgeDef& e : t.edges)
    edges.push_back({{"id", e.id}, {"from", e.from}, {"to", e.to}});
  j["edges"] = std::move(edges);
  j["consumers"] = t.consumers;
  return j;
}

inline NetworkTopology topology_from_json(const nlohmann::json& j) {
  using io_detail::require;
  const std::string what = "topology";
  io_detail::expect_format(j, "dhcal-topology", kTopologyFormatVersion, what);
  NetworkTopology t;
  for (const auto& n : require(j, "nodes", what)) {
    if (!n.is_string()) throw DataError(what + ": node ids must be strings");
    t.nodes.push_back(n.get<std::string>());
  }
  t.root = require(j, "root", what).get<std::string>();
  for (const auto& e : require(j, "edges", what)) {
    EdgeDef d;
    d.id = require(e, "id", what + " edge").get<std::string>();
    d.from = require(e, "from", what + " edge").get<std::string>();
    d.to = require(e, "to", what + " edge").get<std::string>();
    t.edges.push_back(std::move(d));
  }
  for (const auto& c : require(j, "consumers", what))
    t.consumers.push_back(c.get<std::string>());
  return t;
}

inline void save_topology(const NetworkTopology& t,
                          const std::filesystem::path& path) {
  io_detail::write_file(path, topology_to_json(t));
}

inline NetworkTopology load_topology(const std::filesystem::path& path) {
  return topology_from_json(io_detail::parse_file(path));
}

// --- models ----------------------------------------------------------------

inline nlohmann::json model_to_json(const HydraulicModel& m) {
  m.validate();
  const NetworkTopology& topo = m.network->topology();
  nlohmann::json j;
  j["format"] = "dhcal-model";
  j["version"] = kModelFormatVersion;
  j["name"] = m.name;
  j["delta"] = m.delta;
  j["topology"] = topology_to_json(topo);
  auto basis = nlohmann::json::array();
  for (const RampSpec& s : m.basis)
    basis.push_back({{"a", s.a}, {"b", s.b}, {"c", s.c}});
  j["basis"] = std::move(basis);
  nlohmann::json pipes = nlohmann::json::object();
  for (std::size_t e = 0; e < topo.edges.size(); ++e)
    pipes[topo.edges[e].id] = m.pipe_s[e];
  j["pipes"] = std::move(pipes);
  auto valves = nlohmann::json::array();
  for (std::size_t i = 0; i < m.valves.size(); ++i) {
    nlohmann::json v;
    v["consumer"] = topo.consumers[i];
    nlohmann::json theta = nlohmann::json::object();
    for (std::size_t k = 0; k < m.valves[i].theta.size(); ++k)
      if (m.valves[i].theta[k] != 0.0)
        theta[std::to_string(k)] = m.valves[i].theta[k];
    v["theta"] = std::move(theta);
    if (m.valves[i].kv) v["kv"] = *m.valves[i].kv;
    valves.push_back(std::move(v));
  }
  j["valves"] = std::move(valves);
  return j;
}

/// Rebuilds a model from its JSON form.  `base_dir` resolves a string-
/// valued "topology" reference; an inline topology object needs none.
inline HydraulicModel model_from_json(
    const nlohmann::json& j,
    const std::filesystem::path& base_dir = {}) {
  using io_detail::require;
  const std::string what = "model";
  io_detail::expect_format(j, "dhcal-model", kModelFormatVersion, what);

  HydraulicModel m;
  m.name = require(j, "name", what).get<std::string>();
  m.delta = io_detail::require_number(j, "delta", what);

  const auto& topo_field = require(j, "topology", what);
  NetworkTopology topo;
  if (topo_field.is_object()) {
    topo = topology_from_json(topo_field);
  } else if (topo_field.is_string()) {
    if (base_dir.empty())
      throw DataError(
          what +
          ": \"topology\" is a file reference but no base directory is "
          "available to resolve it");
    topo = load_topology(base_dir / topo_field.get<std::string>());
  } else {
    throw DataError(what +
                    ": \"topology\" must be an inline object or a path");
  }
  m.network = std::make_shared<Network>(std::move(topo));
  const NetworkTopology& t = m.network->topology();

  for (const auto& s : require(j, "basis", what)) {
    RampSpec spec;
    spec.a = io_detail::require_number(s, "a", what + " basis entry");
    spec.b = io_detail::require_number(s, "b", what + " basis entry");
    spec.c = io_detail::require_number(s, "c", what + " basis entry");
    m.basis.push_back(spec);
  }

  const auto& pipes = require(j, "pipes", what);
  if (!pipes.is_object())
    throw DataError(what + ": \"pipes\" must map edge ids to resistances");
  m.pipe_s.assign(t.edges.size(), 0.0);
  std::vector<char> seen(t.edges.size(), 0);
  for (const auto& [id, val] : pipes.items()) {
    int e;
    try {
      e = m.network->edge_index(id);
    } catch (const Error&) {
      throw DataError(what + ": \"pipes\" names unknown edge '" + id + "'");
    }
    if (!val.is_number())
      throw DataError(what + ": pipe resistance for '" + id +
                      "' must be a number");
    m.pipe_s[e] = val.get<double>();
    seen[e] = 1;
  }
  for (std::size_t e = 0; e < seen.size(); ++e)
    if (!seen[e])
      throw DataError(what + ": \"pipes\" is missing edge '" + t.edges[e].id +
                      "'");

  const auto& valves = require(j, "valves", what);
  if (!valves.is_array() || valves.size() != t.consumers.size())
    throw DataError(what + ": \"valves\" must list one entry per consumer (" +
                    std::to_string(t.consumers.size()) + ")");
  for (std::size_t i = 0; i < valves.size(); ++i) {
    const auto& v = valves[i];
    const std::string where = what + " valve " + std::to_string(i + 1);
    const std::string id = require(v, "consumer", where).get<std::string>();
    if (id != t.consumers[i])
      throw DataError(where + ": consumer '" + id +
                      "' does not match topology order (expected '" +
                      t.consumers[i] + "')");
    ValveParams vp;
    vp.theta.assign(m.basis.size(), 0.0);
    const auto& theta = require(v, "theta", where);
    if (!theta.is_object())
      throw DataError(where +
                      ": \"theta\" must map basis indices to weights");
    for (const auto& [key, val] : theta.items()) {
      int k = -1;
      const auto [ptr, ec] =
          std::from_chars(key.data(), key.data() + key.size(), k);
      if (ec != std::errc{} || ptr != key.data() + key.size() || k < 0 ||
          static_cast<std::size_t>(k) >= m.basis.size())
        throw DataError(where + ": theta index '" + key +
                        "' is not a basis index in [0, " +
                        std::to_string(m.basis.size()) + ")");
      if (!val.is_number())
        throw DataError(where + ": theta weight for index '" + key +
                        "' must be a number");
      vp.theta[static_cast<std::size_t>(k)] = val.get<double>();
    }
    if (v.contains("kv")) vp.kv = v["kv"].get<double>();
    m.valves.push_back(std::move(vp));
  }

  try {
    m.validate();
  } catch (const Error& e) {
    throw DataError(what + ": " + e.what());
  }
  return m;
}

inline void save_model(const HydraulicModel& m,
                       const std::filesystem::path& path) {
  io_detail::write_file(path, model_to_json(m));
}

inline HydraulicModel load_model(const std::filesystem::path& path) {
  return model_from_json(io_detail::parse_file(path),
                         path.has_parent_path() ? path.parent_path()
                                                : std::filesystem::path("."));
}

// --- fit reports -----------------------------------------------------------

inline nlohmann::json fit_report_to_json(const FittedModel& fit) {
  nlohmann::json j;
  j["format"] = "dhcal-fit-report";
  j["version"] = kFitReportFormatVersion;
  j["model"] = fit.model.name;
  j["objective"] = fit.objective;
  j["status"] = to_string(fit.status);
  j["iterations"] = fit.iterations;
  j["candidate_rows"] = fit.candidate_rows;
  j["min_raw_x"] = fit.min_raw_x;
  auto included = nlohmann::json::array();
  for (std::size_t r = 0; r < fit.rows.size(); ++r)
    included.push_back({{"sample", fit.rows[r].sample},
                        {"consumer", fit.rows[r].consumer},
                        {"residual", fit.residual(static_cast<long>(r))}});
  j["included"] = std::move(included);
  auto excluded = nlohmann::json::array();
  for (const ExcludedRow& r : fit.excluded)
    excluded.push_back({{"sample", r.sample},
                        {"consumer", r.consumer},
                        {"reason", r.reason}});
  j["excluded"] = std::move(excluded);
  const SparsityReport sp = sparsity_report(fit.model);
  j["sparsity"] = {{"valve_nonzero", sp.valve_nonzero},
                   {"total_nonzero", sp.total_nonzero},
                   {"pipe_s", sp.pipe_s}};
  return j;
}

inline void save_fit_report(const FittedModel& fit,
                            const std::filesystem::path& path) {
  io_detail::write_file(path, fit_report_to_json(fit));
}

}  // namespace dhcal
