#pragma once

// Monte Carlo placement study: per-realization IFD, pooled COI/POI
// histograms and IFD boxplot statistics.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "gridgfv/analysis.hpp"
#include "gridgfv/case_model.hpp"
#include "gridgfv/dynamics.hpp"
#include "gridgfv/error.hpp"

namespace gridgfv {

/// Sum over buses and samples of |f - f0|; bus_freq already holds f - f0.
inline double ifd(const Trajectory& traj) { return traj.bus_freq.cwiseAbs().sum(); }

struct Histogram {
  std::vector<double> edges;  // counts.size() + 1 entries
  std::vector<std::uint64_t> counts;

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

/// Equal-width bins over [min, max]; the last bin is closed. A constant
/// sample set yields one bin with equal edges.
inline Histogram make_histogram(std::span<const double> samples, std::size_t bins) {
  if (samples.empty()) throw DataError("histogram: no samples");
  if (bins == 0) throw DataError("histogram: bin count must be positive");
  auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *lo_it, hi = *hi_it;
  Histogram h;
  if (!(hi > lo)) {
    h.edges = {lo, hi};
    h.counts = {samples.size()};
    return h;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + width * static_cast<double>(i);
  h.edges.back() = hi;
  h.counts.assign(bins, 0);
  for (double x : samples) {
    auto idx = static_cast<std::size_t>((x - lo) / width);
    h.counts[std::min(idx, bins - 1)] += 1;
  }
  return h;
}

struct BoxStats {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;

  double iqr() const { return q3 - q1; }
};

/// Linear interpolation between order statistics at position p (n - 1).
inline double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DataError("quantile: no samples");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Quartiles plus Tukey whiskers (most extreme samples within 1.5 IQR).
inline BoxStats box_stats(std::span<const double> samples) {
  if (samples.empty()) throw DataError("box_stats: no samples");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  BoxStats b;
  b.q1 = quantile_sorted(s, 0.25);
  b.median = quantile_sorted(s, 0.5);
  b.q3 = quantile_sorted(s, 0.75);
  const double lo_fence = b.q1 - 1.5 * b.iqr();
  const double hi_fence = b.q3 + 1.5 * b.iqr();
  b.whisker_low = *std::lower_bound(s.begin(), s.end(), lo_fence);
  b.whisker_high = *(std::upper_bound(s.begin(), s.end(), hi_fence) - 1);
  return b;
}

inline double population_std(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= static_cast<double>(samples.size());
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(samples.size()));
}

struct PlacementSummary {
  BusId bus_id = 0;
  std::size_t bus_index = 0;  // position in the case
  double gfv = 0.0;
  Histogram coi_histogram;
  Histogram poi_histogram;
  std::vector<double> ifd_samples;  // one per successful realization
  BoxStats ifd_quartiles;
  double coi_std = 0.0;
  double poi_std = 0.0;
  std::size_t n_realizations = 0;
  std::vector<std::string> failures;  // "realization <r>: <message>"
};

struct McSummary {
  std::vector<PlacementSummary> placements;
  double f0 = 1.0;  // pu; histograms and IFD are in deviations from f0
  double dynamic_connectivity = 0.0;
  bool partial = false;
};

/// Aggregates one placement's realizations.
inline PlacementSummary summarize(BusId bus, std::span<const double> ifd_samples, std::span<const double> coi_samples,
                                  std::span<const double> poi_samples, std::size_t bins) {
  if (ifd_samples.empty() || coi_samples.empty() || poi_samples.empty())
    throw DataError("summarize: empty realization set for bus " + std::to_string(bus));
  PlacementSummary s;
  s.bus_id = bus;
  s.ifd_samples.assign(ifd_samples.begin(), ifd_samples.end());
  s.ifd_quartiles = box_stats(ifd_samples);
  s.coi_histogram = make_histogram(coi_samples, bins);
  s.poi_histogram = make_histogram(poi_samples, bins);
  s.coi_std = population_std(coi_samples);
  s.poi_std = population_std(poi_samples);
  s.n_realizations = ifd_samples.size();
  return s;
}

struct McConfig {
  std::vector<BusId> placement_buses;
  std::size_t n_realizations = 1000;
  double horizon = 200.0;  // s
  double dt = 0.01;        // s
  OuParams ou;
  TurbineParams turbine;
  SwingOptions swing;
  PowerFlowOptions powerflow;
  std::uint64_t base_seed = 0;
  std::size_t bins = 50;
  unsigned threads = 0;  // 0: hardware concurrency
};

inline std::size_t sample_count(double horizon, double dt) {
  if (!(horizon > 0.0) || !(dt > 0.0)) throw DataError("horizon and dt must be positive");
  auto n = static_cast<long long>(std::llround(horizon / dt));
  return static_cast<std::size_t>(std::max(1LL, n));
}

/// Runs `body(i)` for i in [0, count) on up to `threads` workers.
template <typename Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
  }
}

/// Realization r draws its wind path from stream (base_seed, r) at every
/// placement, so placements are compared under common random numbers.
inline McSummary run_monte_carlo(const NetworkCase& net, const McConfig& cfg) {
  if (cfg.n_realizations < 1) throw DataError("n_realizations must be at least 1");
  if (cfg.placement_buses.empty()) throw DataError("no placement buses given");
  for (auto b : cfg.placement_buses) {
    if (!net.bus_index(b)) throw DataError("placement bus " + std::to_string(b) + " does not exist");
  }
  check(cfg.ou);

  const GridAnalysis analysis = analyze_case(net, cfg.powerflow);
  const SwingModel model = build_swing_model(net, analysis.powerflow, analysis.emfs, cfg.swing);
  const std::size_t ns = sample_count(cfg.horizon, cfg.dt);
  OuParams ou = cfg.ou;
  ou.dt = cfg.dt;

  McSummary summary;
  summary.dynamic_connectivity = analysis.gfv.dynamic_connectivity;
  for (BusId bus : cfg.placement_buses) {
    const std::size_t bus_index = *net.bus_index(bus);
    const Eigen::Index col = model.bus_column(bus);
    const std::size_t nr = cfg.n_realizations;

    std::vector<double> ifd_values(nr, 0.0);
    std::vector<double> coi(nr * ns), poi(nr * ns);
    std::vector<std::string> errors(nr);
    std::vector<char> ok(nr, 0);

    parallel_for(nr, cfg.threads, [&](std::size_t r) {
      try {
        Rng rng = make_rng(cfg.base_seed, r);
        auto wind = simulate_ou(ou, ns, rng);
        auto dp = wind_to_power(wind, cfg.turbine);
        Trajectory tr = simulate(model, bus, dp, cfg.dt);
        ifd_values[r] = ifd(tr);
        Eigen::Map<Eigen::VectorXd>(coi.data() + r * ns, static_cast<Eigen::Index>(ns)) = tr.coi_freq;
        Eigen::Map<Eigen::VectorXd>(poi.data() + r * ns, static_cast<Eigen::Index>(ns)) = tr.bus_freq.col(col);
        ok[r] = 1;
      } catch (const std::exception& e) {
        errors[r] = e.what();
      }
    });

    std::vector<double> ifd_ok, coi_ok, poi_ok;
    std::vector<std::string> failures;
    coi_ok.reserve(nr * ns);
    poi_ok.reserve(nr * ns);
    for (std::size_t r = 0; r < nr; ++r) {
      if (!ok[r]) {
        failures.push_back("realization " + std::to_string(r) + ": " + errors[r]);
        continue;
      }
      ifd_ok.push_back(ifd_values[r]);
      coi_ok.insert(coi_ok.end(), coi.begin() + static_cast<std::ptrdiff_t>(r * ns),
                    coi.begin() + static_cast<std::ptrdiff_t>((r + 1) * ns));
      poi_ok.insert(poi_ok.end(), poi.begin() + static_cast<std::ptrdiff_t>(r * ns),
                    poi.begin() + static_cast<std::ptrdiff_t>((r + 1) * ns));
    }

    PlacementSummary s;
    if (!ifd_ok.empty()) {
      s = summarize(bus, ifd_ok, coi_ok, poi_ok, cfg.bins);
    } else {
      s.bus_id = bus;
    }
    s.bus_index = bus_index;
    s.gfv = analysis.gfv.gfv(static_cast<Eigen::Index>(bus_index));
    s.failures = std::move(failures);
    if (!s.failures.empty()) summary.partial = true;
    summary.placements.push_back(std::move(s));
  }
  return summary;
}

}  // namespace gridgfv
