#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "vdlab/errors.hpp"

namespace vdlab {

/// Trailing moving average with truncated windows at the prefix, so the
/// output has the same length as the input and never looks ahead.
inline std::vector<double> smooth(const std::vector<double>& series, int window) {
  if (window < 1) throw InputError("smooth: window must be >= 1");
  std::vector<double> out;
  out.reserve(series.size());
  double running = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    running += series[i];
    if (i >= static_cast<std::size_t>(window)) running -= series[i - static_cast<std::size_t>(window)];
    const std::size_t denom = std::min<std::size_t>(i + 1, static_cast<std::size_t>(window));
    out.push_back(running / static_cast<double>(denom));
  }
  return out;
}

/// Linear-interpolated percentile of a sample (p in [0,100]).
inline double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("percentile: empty sample");
  if (p < 0.0 || p > 100.0) throw InputError("percentile: p outside [0,100]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p / 100.0;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

struct BandPoint {
  std::int64_t env_steps = 0;
  double median = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Cross-seed percentile band over aligned evaluation points.
/// `runs[r]` holds (env_steps, value) pairs for one seed; all runs must
/// share the same env_steps sequence.
inline std::vector<BandPoint> percentile_band(
    const std::vector<std::vector<std::pair<std::int64_t, double>>>& runs,
    double p_lo = 25.0, double p_hi = 75.0) {
  if (runs.size() < 2) throw InputError("percentile_band: need >= 2 runs");
  const std::size_t n_points = runs.front().size();
  for (const auto& run : runs)
    if (run.size() != n_points)
      throw InputError("percentile_band: runs have different lengths");
  std::vector<BandPoint> out;
  out.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const std::int64_t step = runs.front()[i].first;
    std::vector<double> values;
    values.reserve(runs.size());
    for (const auto& run : runs) {
      if (run[i].first != step)
        throw InputError("percentile_band: misaligned evaluation point at step " +
                         std::to_string(run[i].first));
      values.push_back(run[i].second);
    }
    BandPoint bp;
    bp.env_steps = step;
    bp.median = percentile(values, 50.0);
    bp.lo = percentile(values, p_lo);
    bp.hi = percentile(values, p_hi);
    out.push_back(bp);
  }
  return out;
}

/// Fixed-notation float formatting shared by all emitted files, so that
/// identical runs produce byte-identical output.
inline std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace vdlab
