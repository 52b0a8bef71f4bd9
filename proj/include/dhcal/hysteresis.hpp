#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dhcal/errors.hpp"

namespace dhcal {

/// Time-ordered set-point samples for one valve.  Timestamps must be
/// strictly increasing and values lie in [0, 1].
struct SetpointSeries {
  std::vector<double> t;
  std::vector<double> v;
};

/// Deadband estimate of the actual spindle positions behind a commanded
/// set-point series.  The spindle is assumed stuck until the command moves
/// more than `delta` away from it, then it follows at distance `delta` on
/// the approaching side:
///
///   vhat(0) = v(0)
///   vhat(t) = vhat(t-1)    if |v(t) - vhat(t-1)| <= delta
///             v(t) - delta if v(t) > vhat(t-1) + delta
///             v(t) + delta if v(t) < vhat(t-1) - delta
///
/// The output is clamped to [0, 1].  delta = 0 is the identity.
inline std::vector<double> filter_setpoint_values(std::span<const double> v,
                                                  double delta) {
  if (!(delta >= 0.0)) throw std::invalid_argument("deadband must be >= 0");
  std::vector<double> vhat;
  vhat.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0 && v[i] <= 1.0))
      throw DataError("set-point outside [0, 1]");
    double next;
    if (i == 0) {
      next = v[0];
    } else if (std::abs(v[i] - vhat.back()) <= delta) {
      next = vhat.back();
    } else if (v[i] > vhat.back()) {
      next = v[i] - delta;
    } else {
      next = v[i] + delta;
    }
    vhat.push_back(std::clamp(next, 0.0, 1.0));
  }
  return vhat;
}

/// Series form of the deadband filter; timestamps pass through unchanged.
inline SetpointSeries filter_setpoints(const SetpointSeries& series,
                                       double delta) {
  if (series.t.size() != series.v.size())
    throw DataError("set-point series has mismatched lengths");
  for (std::size_t i = 1; i < series.t.size(); ++i)
    if (!(series.t[i] > series.t[i - 1]))
      throw DataError("set-point timestamps must be strictly increasing");
  return {series.t, filter_setpoint_values(series.v, delta)};
}

}  // namespace dhcal
