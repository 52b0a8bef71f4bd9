#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dhcal/components.hpp"
#include "dhcal/errors.hpp"
#include "dhcal/ingest.hpp"
#include "dhcal/lp.hpp"
#include "dhcal/network.hpp"

namespace dhcal {

/// Fixed column layout of the regression matrix: valve i's basis weights
/// occupy columns [i*K, (i+1)*K), pipe coefficients follow.
struct ColumnLayout {
  std::size_t consumers = 0, basis_size = 0, edges = 0;
  std::size_t theta_col(std::size_t valve, std::size_t k) const {
    return valve * basis_size + k;
  }
  std::size_t edge_col(std::size_t edge) const {
    return consumers * basis_size + edge;
  }
  std::size_t cols() const { return consumers * basis_size + edges; }
};

struct ExcludedRow {
  std::size_t sample = 0, consumer = 0;
  std::string reason;
};

struct IncludedRow {
  std::size_t sample = 0, consumer = 0;
};

/// The stacked least-absolute-deviations system: one candidate row per
/// (sample, consumer) pair, equal to the root pressure difference on the
/// right-hand side.  Rows that no finite parameter choice could satisfy
/// are excluded up front and logged.
struct RegressionSystem {
  Eigen::MatrixXd Phi;
  Eigen::VectorXd y;
  ColumnLayout layout;
  std::vector<IncludedRow> rows;
  std::vector<ExcludedRow> excluded;
  std::size_t candidate_rows = 0;

  // Fit context carried along so the solve can hand back a full model.
  std::shared_ptr<const Network> network;
  ValveBasis basis;
  double delta = 0.0;
  std::string model_name;

  void validate() const {
    if (Phi.rows() != static_cast<Eigen::Index>(rows.size()))
      throw Error("system row bookkeeping out of sync");
    if (Phi.rows() != y.size()) throw Error("Phi and y disagree on rows");
    if (Phi.cols() != static_cast<Eigen::Index>(layout.cols()))
      throw Error("Phi and layout disagree on columns");
    if (rows.size() + excluded.size() != candidate_rows)
      throw Error("included + excluded rows do not cover the dataset");
    for (Eigen::Index r = 0; r < Phi.rows(); ++r)
      for (Eigen::Index c = 0; c < Phi.cols(); ++c)
        if (!std::isfinite(Phi(r, c)) || Phi(r, c) < 0.0)
          throw Error("Phi entry not finite and nonnegative");
  }
};

struct AssemblyOptions {
  /// Rows whose consumer draws less than this (l/min) say nothing about
  /// the valve law and would wrongly pin the full head on the pipes.
  double flow_floor = 0.05;
};

/// One valve's admittance-basis row: entry k is q^2 / k_k(v)^2.  A basis
/// function that is fully closed at v cannot pass the observed flow, so a
/// zero k with positive q makes the row infeasible (nullopt).
inline std::optional<Eigen::VectorXd> valve_row(const ValveBasis& basis,
                                                double v, double q) {
  if (q < 0.0) throw DataError("negative flow in valve row");
  Eigen::VectorXd row(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const double kk = ramp(basis[k], v);
    if (kk == 0.0) {
      if (q > 0.0) return std::nullopt;
      row[static_cast<Eigen::Index>(k)] = 0.0;
    } else {
      row[static_cast<Eigen::Index>(k)] = (q * q) / (kk * kk);
    }
  }
  return row;
}

/// Pipe coefficients for every consumer of one sample: entry (i, j) is
/// 2 q_j |q_j| when edge j lies on consumer i's supply path, else 0.  The
/// factor 2 folds in the mirrored return line.
inline Eigen::MatrixXd pipe_block(const Network& net,
                                  std::span<const double> consumer_q) {
  const auto edge_q = net.propagate_flows(consumer_q);
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(net.consumer_count()),
      static_cast<Eigen::Index>(net.edge_count()));
  for (std::size_t i = 0; i < net.consumer_count(); ++i)
    for (int j : net.consumer_paths()[i])
      G(static_cast<Eigen::Index>(i), j) = 2.0 * edge_q[j] * std::abs(edge_q[j]);
  return G;
}

/// Stacks one row per (sample, consumer) pair: valve basis terms in the
/// consumer's own column block, pipe terms shared, y = the sample's root
/// pressure difference.  Infeasible and low-flow rows are dropped and
/// logged; an empty result is an error.
inline RegressionSystem assemble_system(const Dataset& dataset,
                                        std::shared_ptr<const Network> network,
                                        ValveBasis basis,
                                        const AssemblyOptions& opt = {}) {
  if (!network) throw std::invalid_argument("null network");
  const Network& net = *network;
  const std::size_t V = net.consumer_count();
  const std::size_t K = basis.size();
  const std::size_t E = net.edge_count();
  if (K == 0) throw std::invalid_argument("empty valve basis");
  for (const auto& b : basis) validate_ramp_spec(b);

  RegressionSystem sys;
  sys.layout = {V, K, E};
  sys.network = std::move(network);
  sys.basis = std::move(basis);
  sys.candidate_rows = dataset.samples.size() * V;

  std::vector<Eigen::VectorXd> phi_rows;
  std::vector<double> rhs;
  for (std::size_t t = 0; t < dataset.samples.size(); ++t) {
    const Sample& s = dataset.samples[t];
    if (s.v.size() != V || s.q.size() != V)
      throw DataError("sample " + std::to_string(t) + " has " +
                      std::to_string(s.q.size()) + " consumers, topology has " +
                      std::to_string(V));
    const Eigen::MatrixXd G = pipe_block(net, s.q);
    for (std::size_t i = 0; i < V; ++i) {
      if (s.q[i] < opt.flow_floor) {
        sys.excluded.push_back(
            {t, i, "flow below " + std::to_string(opt.flow_floor) + " l/min"});
        continue;
      }
      const auto F = valve_row(sys.basis, s.v[i], s.q[i]);
      if (!F) {
        sys.excluded.push_back(
            {t, i, "closed basis function at set-point " +
                       std::to_string(s.v[i]) + " with flow"});
        continue;
      }
      Eigen::VectorXd row = Eigen::VectorXd::Zero(
          static_cast<Eigen::Index>(sys.layout.cols()));
      row.segment(static_cast<Eigen::Index>(sys.layout.theta_col(i, 0)),
                  static_cast<Eigen::Index>(K)) = *F;
      row.segment(static_cast<Eigen::Index>(sys.layout.edge_col(0)),
                  static_cast<Eigen::Index>(E)) =
          G.row(static_cast<Eigen::Index>(i));
      phi_rows.push_back(std::move(row));
      rhs.push_back(s.dp0);
      sys.rows.push_back({t, i});
    }
  }
  if (phi_rows.empty())
    throw DataError("no usable rows after exclusions (" +
                    std::to_string(sys.excluded.size()) + " excluded)");

  sys.Phi.resize(static_cast<Eigen::Index>(phi_rows.size()),
                 static_cast<Eigen::Index>(sys.layout.cols()));
  sys.y.resize(static_cast<Eigen::Index>(rhs.size()));
  for (std::size_t r = 0; r < phi_rows.size(); ++r) {
    sys.Phi.row(static_cast<Eigen::Index>(r)) = phi_rows[r];
    sys.y[static_cast<Eigen::Index>(r)] = rhs[r];
  }
  sys.validate();
  return sys;
}

/// A calibrated model plus everything needed to audit the fit.
struct FittedModel {
  HydraulicModel model;
  double objective = 0.0;          // sum of absolute residuals, mH2O
  Eigen::VectorXd residual;        // y - Phi x, one entry per included row
  std::vector<IncludedRow> rows;
  std::vector<ExcludedRow> excluded;
  std::size_t candidate_rows = 0;
  int iterations = 0;
  LpStatus status = LpStatus::optimal;
  double min_raw_x = 0.0;          // most negative coefficient before clipping
};

/// Minimizes the summed absolute row error over nonnegative parameters.
/// Columns are rescaled to unit maximum before the solve (the raw mix of
/// q^2 and q^2/k^4 terms spans many orders of magnitude) and the solution
/// unscaled; coefficients below 1e-10 clip to exact zero so downstream
/// sparsity counts are reproducible.
inline FittedModel fit(const RegressionSystem& sys,
                       const SolveOptions& options = {}) {
  sys.validate();
  if (!sys.network) throw std::invalid_argument("system carries no network");

  const Eigen::Index n = sys.Phi.cols();
  Eigen::VectorXd scale(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double m = sys.Phi.col(j).cwiseAbs().maxCoeff();
    scale[j] = m > 0.0 ? m : 1.0;
  }
  Eigen::MatrixXd scaled = sys.Phi * scale.cwiseInverse().asDiagonal();

  const L1Solution sol = solve_l1(scaled, sys.y, options);
  if (sol.status == LpStatus::infeasible || sol.status == LpStatus::unbounded)
    throw SolveError("degenerate fit: " + std::string(to_string(sol.status)));

  Eigen::VectorXd x = sol.x.cwiseQuotient(scale);

  FittedModel out;
  out.min_raw_x = x.size() ? x.minCoeff() : 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j)
    if (x[j] < 1e-10) x[j] = 0.0;

  // Report the objective of the parameters actually returned (after
  // unscaling and clipping), not the solver's internal bookkeeping, so
  // objective and residual always agree exactly.
  out.residual = sys.y - sys.Phi * x;
  out.objective = out.residual.lpNorm<1>();
  out.rows = sys.rows;
  out.excluded = sys.excluded;
  out.candidate_rows = sys.candidate_rows;
  out.iterations = sol.iterations;
  out.status = sol.status;

  HydraulicModel m;
  m.network = sys.network;
  m.basis = sys.basis;
  m.delta = sys.delta;
  m.name = sys.model_name;
  m.pipe_s.resize(sys.layout.edges);
  for (std::size_t j = 0; j < sys.layout.edges; ++j)
    m.pipe_s[j] = x[static_cast<Eigen::Index>(sys.layout.edge_col(j))];
  m.valves.resize(sys.layout.consumers);
  for (std::size_t i = 0; i < sys.layout.consumers; ++i) {
    auto& vp = m.valves[i];
    vp.theta.resize(sys.layout.basis_size);
    double total = 0.0;
    for (std::size_t k = 0; k < sys.layout.basis_size; ++k) {
      vp.theta[k] = x[static_cast<Eigen::Index>(sys.layout.theta_col(i, k))];
      total += vp.theta[k];
    }
    // With every basis function fully open at v=1, the valve resistance
    // there is the plain sum, giving a nameplate flow coefficient.
    if (total > 0.0) vp.kv = 1.0 / std::sqrt(total);
  }
  m.validate();
  out.model = std::move(m);
  return out;
}

/// The whole pipeline: deadband-filter the sample set-points with the
/// preset's band (a no-op at delta = 0), assemble, fit.
inline FittedModel calibrate(const Dataset& dataset,
                             std::shared_ptr<const Network> network,
                             const ModelPreset& preset,
                             const AssemblyOptions& assembly = {},
                             const SolveOptions& solve = {},
                             bool apply_filter = true) {
  Dataset filtered =
      apply_filter ? apply_deadband(dataset, preset.delta) : dataset;
  RegressionSystem sys =
      assemble_system(filtered, std::move(network), preset.basis, assembly);
  sys.delta = preset.delta;
  sys.model_name = preset.name;
  return fit(sys, solve);
}

struct SparsityReport {
  std::vector<int> valve_nonzero;   // count of theta > 0 per consumer
  int total_nonzero = 0;
  std::vector<double> pipe_s;
};

inline SparsityReport sparsity_report(const HydraulicModel& model) {
  SparsityReport rep;
  for (const auto& vp : model.valves) {
    int c = 0;
    for (double th : vp.theta)
      if (th > 0.0) ++c;
    rep.valve_nonzero.push_back(c);
    rep.total_nonzero += c;
  }
  rep.pipe_s = model.pipe_s;
  return rep;
}

}  // namespace dhcal
