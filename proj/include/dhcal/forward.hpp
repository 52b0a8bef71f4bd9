#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dhcal/components.hpp"
#include "dhcal/errors.hpp"
#include "dhcal/hysteresis.hpp"
#include "dhcal/ingest.hpp"
#include "dhcal/network.hpp"

namespace dhcal {

/// Series composition of a branch: the pipe appears twice (supply and
/// mirrored return), the downstream resistance once.
inline Resistance branch_resistance(double s, Resistance sub) {
  if (!(s >= 0.0)) throw std::invalid_argument("pipe resistance must be >= 0");
  return Resistance::finite(2.0 * s) + sub;
}

/// Parallel composition under the square law: branches at a junction see
/// the same head and their flows add, giving a*b/(sqrt(a)+sqrt(b))^2.
/// An impassable branch drops out; a zero branch short-circuits.
inline Resistance parallel_combine(Resistance a, Resistance b) {
  if (a.is_infinite()) return b;
  if (b.is_infinite()) return a;
  const double av = a.value(), bv = b.value();
  if (!(av >= 0.0) || !(bv >= 0.0))
    throw std::invalid_argument("resistance must be >= 0");
  if (av == 0.0 || bv == 0.0) return Resistance::finite(0.0);
  const double root = std::sqrt(av) + std::sqrt(bv);
  return Resistance::finite(av * bv / (root * root));
}

/// One edge of the reduced network: its pipe coefficient, the equivalent
/// resistance of everything reached through it (pipe included), and the
/// flow assigned by the last expansion.
struct ReductionBranch {
  double s = 0.0;
  Resistance shat = Resistance::infinite();
  double q = 0.0;
};

/// The collapsed network: equivalent resistances bottom-up, expansion
/// state top-down.  Branches are indexed by edge, `equiv` by node (only
/// junction and root entries are meaningful).
struct ReductionTree {
  std::vector<ReductionBranch> branch;
  std::vector<Resistance> equiv;
  Resistance root = Resistance::infinite();
  int clamped_heads = 0;
};

/// Bottom-up collapse of the tree at fixed set-points: consumers become
/// their valve resistance, each edge puts its pipe in series, siblings
/// combine in parallel at their junction.
inline ReductionTree reduce(const HydraulicModel& model,
                            std::span<const double> setpoints) {
  model.validate();
  const Network& net = *model.network;
  if (setpoints.size() != net.consumer_count())
    throw std::invalid_argument("set-point count does not match consumers");

  ReductionTree tree;
  tree.branch.assign(net.edge_count(), {});
  tree.equiv.assign(net.node_count(), Resistance::infinite());

  std::function<Resistance(int)> collapse = [&](int node) -> Resistance {
    Resistance acc = Resistance::infinite();
    bool first = true;
    for (int e : net.child_edges(node)) {
      const int child = net.edge_to(e);
      const int consumer = net.consumer_at_node(child);
      const Resistance sub = consumer >= 0
                                 ? model.valve_resistance_at(
                                       static_cast<std::size_t>(consumer),
                                       setpoints[consumer])
                                 : collapse(child);
      ReductionBranch& b = tree.branch[static_cast<std::size_t>(e)];
      b.s = model.pipe_s[static_cast<std::size_t>(e)];
      b.shat = branch_resistance(b.s, sub);
      acc = first ? b.shat : parallel_combine(acc, b.shat);
      first = false;
    }
    tree.equiv[static_cast<std::size_t>(node)] = acc;
    return acc;
  };
  tree.root = collapse(net.root());
  return tree;
}

/// Flow through an equivalent resistance under a given head.  No head or
/// an impassable network flows nothing; a zero resistance with positive
/// head has no finite answer.
inline double total_flow(Resistance shat, double dp0) {
  if (!(dp0 >= 0.0)) throw DataError("negative head");
  if (dp0 == 0.0 || shat.is_infinite()) return 0.0;
  if (shat.value() == 0.0)
    throw SolveError("zero equivalent resistance under positive head");
  return std::sqrt(dp0 / shat.value());
}

/// Top-down expansion: distributes the root head junction by junction,
/// subtracting each trunk pipe's double drop, and reads consumer flows
/// off the leaf branches.  Returns flows in consumer order; per-edge
/// flows are left in the tree.
inline std::vector<double> expand(const HydraulicModel& model,
                                  ReductionTree& tree, double dp0) {
  const Network& net = *model.network;
  if (tree.branch.size() != net.edge_count() ||
      tree.equiv.size() != net.node_count())
    throw std::invalid_argument("reduction does not match the network");
  if (!(dp0 >= 0.0)) throw DataError("negative head");

  std::vector<double> q(net.consumer_count(), 0.0);
  std::function<void(int, double)> descend = [&](int node, double head) {
    for (int e : net.child_edges(node)) {
      ReductionBranch& b = tree.branch[static_cast<std::size_t>(e)];
      b.q = total_flow(b.shat, head);
      const int child = net.edge_to(e);
      const int consumer = net.consumer_at_node(child);
      if (consumer >= 0) {
        q[static_cast<std::size_t>(consumer)] = b.q;
      } else {
        double next = head - 2.0 * b.s * b.q * b.q;
        if (next < 0.0) {  // only round-off can push past zero
          next = 0.0;
          ++tree.clamped_heads;
        }
        descend(child, next);
      }
    }
  };
  descend(net.root(), dp0);
  return q;
}

/// reduce + expand in one call.
inline std::vector<double> forward_flows(const HydraulicModel& model,
                                         std::span<const double> setpoints,
                                         double dp0) {
  ReductionTree tree = reduce(model, setpoints);
  return expand(model, tree, dp0);
}

/// Per-consumer pressure-balance mismatch: valve drop plus doubled pipe
/// drops along the supply path, minus the root head.  A flowless branch
/// behind a closed valve is balanced by convention; flow through a closed
/// valve is infinitely wrong.
inline std::vector<double> pressure_residuals(const HydraulicModel& model,
                                              std::span<const double> setpoints,
                                              std::span<const double> flows,
                                              double dp0) {
  const Network& net = *model.network;
  if (setpoints.size() != net.consumer_count() ||
      flows.size() != net.consumer_count())
    throw std::invalid_argument("consumer count mismatch");
  const auto edge_q = net.propagate_flows(flows);
  std::vector<double> res(net.consumer_count(), 0.0);
  for (std::size_t i = 0; i < net.consumer_count(); ++i) {
    const Resistance r = model.valve_resistance_at(i, setpoints[i]);
    if (r.is_infinite()) {
      res[i] = flows[i] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
      continue;
    }
    double lhs = r.value() * flows[i] * flows[i];
    for (int e : net.consumer_paths()[i]) {
      const double qe = edge_q[static_cast<std::size_t>(e)];
      lhs += 2.0 * model.pipe_s[static_cast<std::size_t>(e)] * qe * qe;
    }
    res[i] = lhs - dp0;
  }
  return res;
}

struct OracleOptions {
  double flow_tol = 1e-14;      // bisection bracket width, l/min
  double residual_tol = 1e-12;  // pressure-balance certificate, mH2O
  int bisection_cap = 200;      // per coordinate solve
  int sweep_cap = 500;
};

/// Reference solver, independent of reduce/expand: the flow distribution
/// is the minimizer of a strictly convex content functional whose partial
/// derivative with respect to consumer i is exactly that consumer's
/// pressure-balance residual.  Each residual is strictly increasing in
/// its own flow, so cyclic per-consumer bisection on the residual's sign
/// walks straight to the unique balanced point; the returned flows are
/// certified against the balance equations before being handed back.
inline std::vector<double> oracle_solve(const HydraulicModel& model,
                                        std::span<const double> setpoints,
                                        double dp0,
                                        const OracleOptions& opt = {}) {
  model.validate();
  const Network& net = *model.network;
  const std::size_t V = net.consumer_count();
  if (setpoints.size() != V)
    throw std::invalid_argument("set-point count does not match consumers");
  if (!(dp0 >= 0.0)) throw DataError("negative head");
  std::vector<double> q(V, 0.0);
  if (dp0 == 0.0) return q;

  std::vector<Resistance> rv(V);
  for (std::size_t i = 0; i < V; ++i)
    rv[i] = model.valve_resistance_at(i, setpoints[i]);

  const double scale = std::max(1.0, dp0);
  for (int sweep = 0; sweep < opt.sweep_cap; ++sweep) {
    for (std::size_t i = 0; i < V; ++i) {
      if (rv[i].is_infinite()) {
        q[i] = 0.0;
        continue;
      }
      const double r = rv[i].value();

      // Freeze everyone else: on consumer i's path each edge carries a
      // constant contribution from the other consumers plus q_i itself.
      q[i] = 0.0;
      const auto edge_q = net.propagate_flows(q);
      std::vector<std::pair<double, double>> path;  // (pipe s, others' flow)
      for (int e : net.consumer_paths()[i])
        path.emplace_back(model.pipe_s[static_cast<std::size_t>(e)],
                          edge_q[static_cast<std::size_t>(e)]);
      auto residual = [&](double qi) {
        double lhs = r * qi * qi;
        for (const auto& [s, base] : path) {
          const double qe = base + qi;
          lhs += 2.0 * s * qe * qe;
        }
        return lhs - dp0;
      };

      if (residual(0.0) >= 0.0) {
        q[i] = 0.0;  // shared pipes already exhaust the head
        continue;
      }
      double lo = 0.0, hi;
      if (r > 0.0) {
        hi = std::sqrt(dp0 / r);
      } else {
        hi = 1.0;
        while (residual(hi) < 0.0) {
          hi *= 2.0;
          if (hi > 1e12)
            throw SolveError("consumer " + std::to_string(i + 1) +
                             " sees no resistance: flow is unbounded");
        }
      }
      for (int step = 0;
           step < opt.bisection_cap && hi - lo > opt.flow_tol * std::max(1.0, hi);
           ++step) {
        const double mid = 0.5 * (lo + hi);
        (residual(mid) < 0.0 ? lo : hi) = mid;
      }
      q[i] = 0.5 * (lo + hi);
    }

    const auto res = pressure_residuals(model, setpoints, q, dp0);
    double worst = 0.0;
    for (std::size_t i = 0; i < V; ++i) {
      // A consumer pinned at zero flow may legitimately carry a positive
      // residual: the shared pipes already burn the whole head.
      if (q[i] == 0.0 && res[i] >= 0.0 && !std::isinf(res[i])) continue;
      worst = std::max(worst, std::abs(res[i]));
    }
    if (worst <= opt.residual_tol * scale) return q;
  }
  throw SolveError("pressure balance did not converge within " +
                   std::to_string(opt.sweep_cap) + " sweeps");
}

/// Per-sample forward predictions for a whole dataset.  The model's
/// deadband is applied to the set-point sequence first (the spindle the
/// plant actually followed); samples that cannot be solved are recorded
/// and skipped, not fatal.
struct PredictResult {
  std::vector<std::vector<double>> flows;  // empty vector = failed sample
  std::vector<std::pair<std::size_t, std::string>> failures;
};

/// Prediction CSV: `t,qhat1..qhatN` aligned row-for-row with the input
/// dataset; failed samples carry nan.
inline void save_predictions(const Dataset& dataset, const PredictResult& pred,
                             const std::string& path) {
  if (pred.flows.size() != dataset.samples.size())
    throw std::invalid_argument("predictions do not align with the dataset");
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  const std::size_t n = dataset.consumer_count();
  out << "t";
  for (std::size_t i = 1; i <= n; ++i) out << ",qhat" << i;
  out << "\n";
  for (std::size_t t = 0; t < pred.flows.size(); ++t) {
    out << csv_detail::format_double(dataset.samples[t].t);
    for (std::size_t i = 0; i < n; ++i)
      out << ','
          << (pred.flows[t].empty() ? "nan"
                                    : csv_detail::format_double(pred.flows[t][i]));
    out << "\n";
  }
  if (!out) throw Error("failed writing '" + path + "'");
}

struct Predictions {
  std::vector<double> t;
  std::vector<std::vector<double>> q;  // empty vector = failed sample
};

inline Predictions load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto header = csv_detail::split(line);
  if (header.size() < 2 || csv_detail::lower(header[1]).rfind("qhat", 0) != 0)
    throw DataError(path + ": expected columns t,qhat1..");
  const std::size_t n = header.size() - 1;
  Predictions out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = csv_detail::split(line);
    if (cells.size() != header.size())
      throw DataError(path + ": line " + std::to_string(lineno) +
                      " has wrong cell count");
    const std::string where = path + " line " + std::to_string(lineno);
    out.t.push_back(csv_detail::parse_double(cells[0], where));
    std::vector<double> q;
    bool failed = false;
    for (std::size_t i = 1; i <= n; ++i) {
      if (cells[i] == "nan") {
        failed = true;
        break;
      }
      q.push_back(csv_detail::parse_double(cells[i], where));
    }
    out.q.push_back(failed ? std::vector<double>{} : std::move(q));
  }
  return out;
}

inline PredictResult predict_dataset(const HydraulicModel& model,
                                     const Dataset& dataset) {
  model.validate();
  const std::size_t V = model.network->consumer_count();
  for (std::size_t t = 0; t < dataset.samples.size(); ++t)
    if (dataset.samples[t].v.size() != V)
      throw DataError("sample " + std::to_string(t) +
                      " does not match the model's consumer count");

  const Dataset filtered = apply_deadband(dataset, model.delta);
  PredictResult out;
  out.flows.resize(filtered.samples.size());
  for (std::size_t t = 0; t < filtered.samples.size(); ++t) {
    const Sample& s = filtered.samples[t];
    if (!(s.dp0 > 0.0)) {
      out.failures.emplace_back(t, "nonpositive head");
      continue;
    }
    try {
      out.flows[t] = forward_flows(model, s.v, s.dp0);
    } catch (const Error& e) {
      out.failures.emplace_back(t, e.what());
    }
  }
  return out;
}

}  // namespace dhcal
