#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dhcal/errors.hpp"
#include "dhcal/network.hpp"

namespace dhcal {

/// One basis characteristic: a clamped ramp between the knees `a` (fully
/// closed below) and `b` (fully open above), raised to the exponent `c`.
/// Requires 0 <= a < b <= 1 and c > 0.
struct RampSpec {
  double a = 0.0;
  double b = 1.0;
  double c = 1.0;

  friend bool operator==(const RampSpec&, const RampSpec&) = default;
};

/// Ordered list of basis characteristics shared by every valve of a model.
using ValveBasis = std::vector<RampSpec>;

inline void validate_ramp_spec(const RampSpec& s) {
  if (!(0.0 <= s.a && s.a < s.b && s.b <= 1.0))
    throw std::invalid_argument("ramp knees must satisfy 0 <= a < b <= 1");
  if (!(s.c > 0.0)) throw std::invalid_argument("ramp exponent must be > 0");
}

/// Basis characteristic value k(v): 0 below the lower knee, 1 above the
/// upper knee, ((v-a)/(b-a))^c in between.  The exponent is folded in here
/// so the result is the characteristic itself, not just the bare ramp.
inline double ramp(const RampSpec& spec, double v) {
  validate_ramp_spec(spec);
  if (!(v >= 0.0 && v <= 1.0))
    throw std::invalid_argument("set-point outside [0, 1]");
  if (v <= spec.a) return 0.0;
  if (v >= spec.b) return 1.0;
  const double t = (v - spec.a) / (spec.b - spec.a);
  return spec.c == 1.0 ? t : std::pow(t, spec.c);
}

/// Pipe pressure drop s*q*|q| in mH2O for a resistance s in
/// mH2O*(min/l)^2 and a flow q in l/min.  Odd in q.
inline double pipe_dp(double s, double q) {
  if (!(s >= 0.0)) throw std::invalid_argument("pipe resistance must be >= 0");
  return s * q * std::abs(q);
}

/// Nonnegative resistance that can be exactly infinite (a closed valve).
/// The infinite state is tagged instead of relying on IEEE overflow so
/// downstream code can branch on it without FP edge cases.
class Resistance {
 public:
  constexpr Resistance() = default;

  static constexpr Resistance finite(double value) {
    Resistance r;
    r.value_ = value;
    return r;
  }
  static constexpr Resistance infinite() {
    Resistance r;
    r.inf_ = true;
    return r;
  }

  constexpr bool is_infinite() const noexcept { return inf_; }

  /// Finite value accessor; throws on the infinite state.
  constexpr double value() const {
    if (inf_) throw Error("resistance is infinite");
    return value_;
  }

  /// Series composition: resistances add, infinity absorbs.
  friend constexpr Resistance operator+(Resistance x, Resistance y) {
    if (x.inf_ || y.inf_) return infinite();
    return finite(x.value_ + y.value_);
  }

 private:
  double value_ = 0.0;
  bool inf_ = false;
};

/// Per-valve parameters: nonnegative weights over the shared basis, plus an
/// optional nominal flow coefficient used only for diagnostic curve output.
struct ValveParams {
  std::vector<double> theta;
  std::optional<double> kv;
};

/// Valve resistance r(v) = sum_k theta_k / k_k(v)^2.  A term with positive
/// weight and a closed characteristic makes the whole resistance infinite;
/// zero-weight terms contribute nothing even where k_k(v) = 0.
inline Resistance valve_resistance(const std::vector<double>& theta,
                                   const ValveBasis& basis, double v) {
  if (theta.size() != basis.size())
    throw std::invalid_argument("weight count does not match basis size");
  double r = 0.0;
  for (std::size_t k = 0; k < basis.size(); ++k) {
    if (!(theta[k] >= 0.0))
      throw std::invalid_argument("valve weights must be >= 0");
    if (theta[k] == 0.0) continue;
    const double kk = ramp(basis[k], v);
    if (kk == 0.0) return Resistance::infinite();
    r += theta[k] / (kk * kk);
  }
  return Resistance::finite(r);
}

/// Valve pressure drop r(v)*q^2 for one-way flow q >= 0.  Flow through an
/// infinite resistance is infeasible; the returned +infinity marks data
/// inconsistent with a closed valve.  q = 0 costs nothing either way.
inline double valve_dp(const std::vector<double>& theta, const ValveBasis& basis,
                       double v, double q) {
  if (!(q >= 0.0)) throw std::invalid_argument("valve flow must be >= 0");
  const Resistance r = valve_resistance(theta, basis, v);
  if (q == 0.0) return 0.0;
  if (r.is_infinite()) return std::numeric_limits<double>::infinity();
  return r.value() * q * q;
}

/// Effective admittance of a valve with flow coefficient K_v and
/// characteristic k behind a series pipe resistance s:
///   k_hat(v) = K_v k(v) / sqrt(s K_v^2 k(v)^2 + 1),
/// so that q = k_hat(v) sqrt(dp) over the whole branch.  Diagnostic only;
/// shows how pipe resistance masquerades as a distorted valve curve.
inline double composite_consumer_curve(double s, double kv, const RampSpec& k,
                                       double v) {
  if (!(s >= 0.0)) throw std::invalid_argument("pipe resistance must be >= 0");
  if (!(kv > 0.0)) throw std::invalid_argument("flow coefficient must be > 0");
  const double kk = ramp(k, v);
  return kv * kk / std::sqrt(s * kv * kv * kk * kk + 1.0);
}

/// Cartesian product of knee and exponent lists in a-major, then b, then c
/// order.  Every (a, b) pairing must keep a < b.
inline ValveBasis basis_grid(const std::vector<double>& a_values,
                             const std::vector<double>& b_values,
                             const std::vector<double>& c_values) {
  if (a_values.empty() || b_values.empty() || c_values.empty())
    throw std::invalid_argument("basis grid value lists must be nonempty");
  ValveBasis basis;
  basis.reserve(a_values.size() * b_values.size() * c_values.size());
  for (double a : a_values)
    for (double b : b_values)
      for (double c : c_values) {
        RampSpec s{a, b, c};
        validate_ramp_spec(s);
        basis.push_back(s);
      }
  return basis;
}

/// The 60-characteristic grid used by the nonlinear model presets.
inline ValveBasis default_grid() {
  return basis_grid({0.10, 0.15, 0.20, 0.25},
                    {0.80, 0.85, 0.90, 0.95, 1.00}, {1.0, 1.25, 1.5});
}

struct ModelPreset {
  std::string name;
  ValveBasis basis;
  double delta = 0.0;  // hysteresis deadband; 0 disables filtering
};

/// Named model structures:
///   A - single linear characteristic k(v) = v, no hysteresis;
///   B - 60-characteristic grid, no hysteresis;
///   C - same grid with deadband 0.015.
inline ModelPreset model_preset(const std::string& name) {
  if (name == "A" || name == "a")
    return {"A", ValveBasis{RampSpec{0.0, 1.0, 1.0}}, 0.0};
  if (name == "B" || name == "b") return {"B", default_grid(), 0.0};
  if (name == "C" || name == "c") return {"C", default_grid(), 0.015};
  throw std::invalid_argument("unknown model preset '" + name +
                              "' (expected A, B or C)");
}

/// A calibrated (or hand-specified) hydraulic model: a validated network
/// plus per-edge pipe resistances, the shared valve basis, per-consumer
/// valve weights and the hysteresis deadband used to preprocess set-points.
struct HydraulicModel {
  std::shared_ptr<const Network> network;
  std::vector<double> pipe_s;       // edge order
  ValveBasis basis;
  std::vector<ValveParams> valves;  // consumer order
  double delta = 0.0;
  std::string name;

  void validate() const {
    if (!network) throw Error("model has no network");
    if (pipe_s.size() != network->edge_count())
      throw Error("model pipe resistance count does not match edge count");
    for (double s : pipe_s)
      if (!(s >= 0.0)) throw Error("model pipe resistance must be >= 0");
    if (valves.size() != network->consumer_count())
      throw Error("model valve count does not match consumer count");
    for (const RampSpec& s : basis) validate_ramp_spec(s);
    for (const ValveParams& vp : valves) {
      if (vp.theta.size() != basis.size())
        throw Error("valve weight count does not match basis size");
      for (double t : vp.theta)
        if (!(t >= 0.0)) throw Error("valve weights must be >= 0");
    }
    if (!(delta >= 0.0 && delta < 1.0))
      throw Error("hysteresis deadband must lie in [0, 1)");
  }

  /// Resistance of consumer i's valve at set-point v.
  Resistance valve_resistance_at(std::size_t i, double v) const {
    return dhcal::valve_resistance(valves.at(i).theta, basis, v);
  }
};

}  // namespace dhcal
