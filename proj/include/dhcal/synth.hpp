#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "dhcal/errors.hpp"
#include "dhcal/forward.hpp"
#include "dhcal/hysteresis.hpp"
#include "dhcal/ingest.hpp"

namespace dhcal {

struct SynthConfig {
  std::uint64_t seed = 0;
  double floor = 0.3;
  double ceiling = 1.0;
  int dwell = 40;              // seconds per held set-point
  double delta_true = 0.0;     // actuator deadband the plant really has
  double noise_flow = 0.0;     // uniform +-amplitude on FT channels, l/min
  double noise_pressure = 0.0; // uniform +-amplitude on PT channels, mH2O
  double dp0 = 5.0;            // constant pump head, mH2O
  std::vector<double> dp0_schedule;  // optional per-dwell override

  void validate() const {
    if (!(floor >= 0.0 && floor <= ceiling && ceiling <= 1.0))
      throw std::invalid_argument("need 0 <= floor <= ceiling <= 1");
    if (dwell < 1) throw std::invalid_argument("dwell must be at least 1 s");
    if (noise_flow < 0.0 || noise_pressure < 0.0)
      throw std::invalid_argument("noise amplitudes must be >= 0");
    if (!(dp0 > 0.0)) throw std::invalid_argument("head must be positive");
    for (double h : dp0_schedule)
      if (!(h > 0.0)) throw std::invalid_argument("scheduled head must be positive");
  }
  double head_at(std::size_t dwell_index) const {
    return dwell_index < dp0_schedule.size() ? dp0_schedule[dwell_index] : dp0;
  }
};

/// Noise-free record of what the plant actually did during one dwell:
/// commanded set-points, the spindle positions after the deadband, and
/// the resulting steady flows.
struct TruthSample {
  double t = 0.0;
  double dp0 = 0.0;
  std::vector<double> v;     // commands
  std::vector<double> vhat;  // spindles
  std::vector<double> q;     // flows, l/min
};

struct SynthResult {
  std::vector<RawRecord> raw;      // noisy 1 Hz stream
  std::vector<TruthSample> truth;  // one entry per dwell, t = dwell start
  std::vector<std::size_t> saturated;      // dwells where a set-point hit 1
  std::vector<std::size_t> non_converged;  // dwells where inversion stalled
};

/// Truth as an ingest dataset; by default samples carry the commanded
/// set-points, matching what the instrumentation logs.
inline Dataset to_dataset(const SynthResult& result, bool use_spindle = false) {
  Dataset d;
  d.provenance = Provenance::synthetic;
  for (const TruthSample& s : result.truth)
    d.samples.push_back({s.t, s.dp0, use_spindle ? s.vhat : s.v, s.q});
  return d;
}

namespace synth_detail {

/// Trunk meter readings from per-consumer draws: meter i sees everything
/// still bound for consumers i..N, so the values telescope back.
inline std::vector<double> invert_telescoping(const std::vector<double>& q) {
  std::vector<double> ft(q.size());
  double acc = 0.0;
  for (std::size_t i = q.size(); i-- > 0;) {
    acc += q[i];
    ft[i] = acc;
  }
  return ft;
}

/// Expands per-dwell truths into the noisy 1 Hz stream.  Draw order per
/// record: flow channels in consumer order, then the two pressures.
inline void emit_raw(const SynthConfig& cfg,
                     const std::vector<TruthSample>& truth,
                     std::mt19937_64& rng, std::vector<RawRecord>& out) {
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  for (std::size_t d = 0; d < truth.size(); ++d) {
    const auto ft = invert_telescoping(truth[d].q);
    for (int s = 0; s < cfg.dwell; ++s) {
      RawRecord r;
      r.t = truth[d].t + s;
      r.ft = ft;
      for (double& f : r.ft)
        if (cfg.noise_flow > 0.0) f += cfg.noise_flow * noise(rng);
      r.pt1 = truth[d].dp0;
      r.pt2 = 0.0;
      if (cfg.noise_pressure > 0.0) {
        r.pt1 += cfg.noise_pressure * noise(rng);
        r.pt2 += cfg.noise_pressure * noise(rng);
      }
      r.v = truth[d].v;
      out.push_back(std::move(r));
    }
  }
}

/// Applies the actuator deadband across the dwell sequence, one channel
/// at a time.  Commands are constant within a dwell, so filtering the
/// dwell sequence equals filtering the 1 Hz command stream.
inline std::vector<std::vector<double>> spindle_series(
    const std::vector<std::vector<double>>& commands, double delta) {
  if (commands.empty()) return {};
  const std::size_t V = commands.front().size();
  std::vector<std::vector<double>> out(commands.size(),
                                       std::vector<double>(V, 0.0));
  for (std::size_t c = 0; c < V; ++c) {
    std::vector<double> series(commands.size());
    for (std::size_t t = 0; t < commands.size(); ++t) series[t] = commands[t][c];
    const auto filtered = filter_setpoint_values(series, delta);
    for (std::size_t t = 0; t < commands.size(); ++t) out[t][c] = filtered[t];
  }
  return out;
}

}  // namespace synth_detail

/// Excitation protocol: every dwell re-draws each consumer's set-point
/// uniformly from [floor, ceiling], the deadband turns commands into
/// spindles, and the reference solver produces the steady flows.  Returns
/// the noisy raw stream plus the noise-free dwell truths.
inline SynthResult generate_exciting(const HydraulicModel& model,
                                     const SynthConfig& cfg, int dwells) {
  model.validate();
  cfg.validate();
  if (dwells < 1) throw std::invalid_argument("need at least one dwell");
  const std::size_t V = model.network->consumer_count();

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> draw(cfg.floor, cfg.ceiling);

  std::vector<std::vector<double>> commands(dwells, std::vector<double>(V));
  for (int d = 0; d < dwells; ++d)
    for (std::size_t i = 0; i < V; ++i) commands[d][i] = draw(rng);
  const auto spindles = synth_detail::spindle_series(commands, cfg.delta_true);

  SynthResult out;
  for (int d = 0; d < dwells; ++d) {
    TruthSample s;
    s.t = static_cast<double>(d) * cfg.dwell;
    s.dp0 = cfg.head_at(static_cast<std::size_t>(d));
    s.v = commands[d];
    s.vhat = spindles[d];
    s.q = oracle_solve(model, s.vhat, s.dp0);
    out.truth.push_back(std::move(s));
  }
  synth_detail::emit_raw(cfg, out.truth, rng, out.raw);
  return out;
}

/// Load-tracking protocol: per dwell, find the commands that make each
/// consumer draw its reference flow.  Each consumer's flow is strictly
/// monotone in its own set-point, so a bisection per consumer, swept to a
/// joint fixed point, inverts the network relation.  References beyond
/// the valve's capacity saturate at fully open and flag the dwell.
inline SynthResult generate_loadcurve(
    const HydraulicModel& model, const SynthConfig& cfg,
    const std::vector<std::vector<double>>& references) {
  model.validate();
  cfg.validate();
  if (references.empty()) throw std::invalid_argument("no reference samples");
  const std::size_t V = model.network->consumer_count();
  for (const auto& ref : references)
    if (ref.size() != V)
      throw std::invalid_argument("reference row does not match consumers");

  std::mt19937_64 rng(cfg.seed);
  SynthResult out;
  std::vector<std::vector<double>> commands;
  for (std::size_t d = 0; d < references.size(); ++d) {
    const double head = cfg.head_at(d);
    std::vector<double> v(V, 1.0);
    bool saturated = false, converged = false;
    for (int pass = 0; pass < 100 && !converged; ++pass) {
      double moved = 0.0;
      saturated = false;  // only the settled configuration's verdict counts
      for (std::size_t i = 0; i < V; ++i) {
        const double want = references[d][i];
        auto flow_at = [&](double vi) {
          auto probe = v;
          probe[i] = vi;
          return forward_flows(model, probe, head)[i];
        };
        double next;
        if (want <= 0.0) {
          next = 0.0;
        } else if (flow_at(1.0) < want) {
          next = 1.0;  // reference beyond reach even fully open
          saturated = true;
        } else {
          double lo = 0.0, hi = 1.0;
          for (int step = 0; step < 60; ++step) {
            const double mid = 0.5 * (lo + hi);
            (flow_at(mid) < want ? lo : hi) = mid;
          }
          next = 0.5 * (lo + hi);
        }
        moved = std::max(moved, std::abs(next - v[i]));
        v[i] = next;
      }
      converged = moved <= 1e-9;
    }
    if (!converged) out.non_converged.push_back(d);
    if (saturated) out.saturated.push_back(d);
    commands.push_back(std::move(v));
  }

  const auto spindles = synth_detail::spindle_series(commands, cfg.delta_true);
  for (std::size_t d = 0; d < references.size(); ++d) {
    TruthSample s;
    s.t = static_cast<double>(d) * cfg.dwell;
    s.dp0 = cfg.head_at(d);
    s.v = commands[d];
    s.vhat = spindles[d];
    s.q = oracle_solve(model, s.vhat, s.dp0);
    out.truth.push_back(std::move(s));
  }
  synth_detail::emit_raw(cfg, out.truth, rng, out.raw);
  return out;
}

/// Truth CSV: `t,dp0,v1..vN,vhat1..vhatN,q1..qN`, full precision.
inline void save_truth_csv(const SynthResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  const std::size_t n = result.truth.empty() ? 0 : result.truth.front().v.size();
  out << "t,dp0";
  for (std::size_t i = 1; i <= n; ++i) out << ",v" << i;
  for (std::size_t i = 1; i <= n; ++i) out << ",vhat" << i;
  for (std::size_t i = 1; i <= n; ++i) out << ",q" << i;
  out << "\n";
  for (const TruthSample& s : result.truth) {
    out << csv_detail::format_double(s.t) << ','
        << csv_detail::format_double(s.dp0);
    for (double x : s.v) out << ',' << csv_detail::format_double(x);
    for (double x : s.vhat) out << ',' << csv_detail::format_double(x);
    for (double x : s.q) out << ',' << csv_detail::format_double(x);
    out << "\n";
  }
  if (!out) throw Error("failed writing '" + path + "'");
}

inline std::vector<TruthSample> load_truth_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto header = csv_detail::split(line);
  if (header.size() < 5 || (header.size() - 2) % 3 != 0)
    throw DataError(path + ": expected t,dp0,v*,vhat*,q* columns");
  const std::size_t n = (header.size() - 2) / 3;
  std::vector<TruthSample> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = csv_detail::split(line);
    if (cells.size() != header.size())
      throw DataError(path + ": line " + std::to_string(lineno) +
                      " has wrong cell count");
    const std::string where = path + " line " + std::to_string(lineno);
    TruthSample s;
    s.t = csv_detail::parse_double(cells[0], where);
    s.dp0 = csv_detail::parse_double(cells[1], where);
    for (std::size_t i = 0; i < n; ++i)
      s.v.push_back(csv_detail::parse_double(cells[2 + i], where));
    for (std::size_t i = 0; i < n; ++i)
      s.vhat.push_back(csv_detail::parse_double(cells[2 + n + i], where));
    for (std::size_t i = 0; i < n; ++i)
      s.q.push_back(csv_detail::parse_double(cells[2 + 2 * n + i], where));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace dhcal
