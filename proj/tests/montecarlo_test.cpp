#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gridgfv/montecarlo.hpp"
#include "test_util.hpp"

namespace gridgfv {
namespace {

using testing::load_fixture;

Trajectory constant_trajectory(Eigen::Index samples, Eigen::Index buses, double value) {
  Trajectory tr;
  tr.t = Eigen::VectorXd::LinSpaced(samples, 0.0, 1.0);
  tr.bus_freq = Eigen::MatrixXd::Constant(samples, buses, value);
  return tr;
}

McConfig small_config(std::vector<BusId> buses, std::size_t n = 8, double horizon = 5.0) {
  McConfig cfg;
  cfg.placement_buses = std::move(buses);
  cfg.n_realizations = n;
  cfg.horizon = horizon;
  cfg.base_seed = 17;
  return cfg;
}

TEST(Ifd, ZeroDeviation) { EXPECT_EQ(ifd(constant_trajectory(10, 4, 0.0)), 0.0); }

TEST(Ifd, ConstantDeviation) { EXPECT_NEAR(ifd(constant_trajectory(3, 2, 0.001)), 0.006, 1e-15); }

TEST(Ifd, MatchesNaiveDoubleLoop) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01(0.0, 1e-3);
  Trajectory tr;
  tr.bus_freq.resize(200, 7);
  for (Eigen::Index i = 0; i < tr.bus_freq.size(); ++i) tr.bus_freq.data()[i] = n01(rng);
  double naive = 0.0;
  for (Eigen::Index b = 0; b < 7; ++b)
    for (Eigen::Index k = 0; k < 200; ++k) naive += std::abs((1.0 + tr.bus_freq(k, b)) - 1.0);
  EXPECT_NEAR(ifd(tr), naive, 1e-12);
  EXPECT_GE(ifd(tr), 0.0);
}

TEST(Summarize, SingleSample) {
  std::vector<double> x{2.5};
  auto s = summarize(3, x, x, x, 50);
  for (double q : {s.ifd_quartiles.q1, s.ifd_quartiles.median, s.ifd_quartiles.q3, s.ifd_quartiles.whisker_low,
                   s.ifd_quartiles.whisker_high})
    EXPECT_EQ(q, 2.5);
  ASSERT_EQ(s.coi_histogram.counts.size(), 1u);
  EXPECT_EQ(s.coi_histogram.counts[0], 1u);
}

TEST(Summarize, FivePointQuartiles) {
  std::vector<double> x{5, 3, 1, 4, 2};
  auto b = box_stats(x);
  EXPECT_EQ(b.median, 3.0);
  EXPECT_EQ(b.q1, 2.0);
  EXPECT_EQ(b.q3, 4.0);
  EXPECT_EQ(b.whisker_low, 1.0);
  EXPECT_EQ(b.whisker_high, 5.0);
}

TEST(Summarize, WhiskersExcludeOutliers) {
  std::vector<double> x{1, 2, 3, 4, 5, 100};
  auto b = box_stats(x);
  EXPECT_EQ(b.whisker_high, 5.0);
  EXPECT_EQ(b.whisker_low, 1.0);
  auto s = summarize(1, x, x, x, 10);
  EXPECT_EQ(s.ifd_samples.size(), 6u);  // outliers kept in the raw samples
}

TEST(Summarize, StandardNormalQuartiles) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01;
  std::vector<double> x(10000);
  for (auto& v : x) v = n01(rng);
  auto b = box_stats(x);
  EXPECT_NEAR(b.median, 0.0, 0.05);
  EXPECT_NEAR(b.iqr() / 1.3489795, 1.0, 0.05);
}

TEST(Summarize, EmptyInputRejected) {
  std::vector<double> none, one{1.0};
  EXPECT_THROW(summarize(1, none, one, one, 10), DataError);
  EXPECT_THROW(make_histogram(none, 10), DataError);
}

TEST(Histogram, ConservesCountsAndCoversRange) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 3.0);
  for (std::size_t bins : {1u, 7u, 50u}) {
    std::vector<double> x(1234);
    for (auto& v : x) v = u(rng);
    auto h = make_histogram(x, bins);
    EXPECT_EQ(h.total(), x.size());
    ASSERT_EQ(h.edges.size(), bins + 1);
    EXPECT_EQ(h.edges.front(), *std::min_element(x.begin(), x.end()));
    EXPECT_EQ(h.edges.back(), *std::max_element(x.begin(), x.end()));
    for (std::size_t i = 0; i < bins; ++i) {
      auto in_bin = std::count_if(x.begin(), x.end(), [&](double v) {
        return v >= h.edges[i] && (i + 1 == bins ? v <= h.edges[i + 1] : v < h.edges[i + 1]);
      });
      EXPECT_EQ(static_cast<std::uint64_t>(in_bin), h.counts[i]);
    }
  }
}

TEST(RunMonteCarlo, DeterministicWindGivesZero) {
  auto cfg = small_config({5}, 1, 2.0);
  cfg.ou.b = 0.0;
  auto s = run_monte_carlo(load_fixture("case9.json"), cfg);
  ASSERT_EQ(s.placements.size(), 1u);
  const auto& p = s.placements[0];
  EXPECT_EQ(p.ifd_samples, std::vector<double>{0.0});
  EXPECT_EQ(p.coi_histogram.counts.size(), 1u);
  EXPECT_EQ(p.poi_histogram.counts.size(), 1u);
  EXPECT_EQ(p.coi_histogram.edges[0], 0.0);
  EXPECT_FALSE(s.partial);
}

TEST(RunMonteCarlo, SymmetricPlacementsMatch) {
  // Buses 2 and 4 of the ring mirror each other across the 1-3 axis.
  auto s = run_monte_carlo(load_fixture("ring4.json"), small_config({2, 4}, 6, 10.0));
  const auto &a = s.placements[0], &b = s.placements[1];
  ASSERT_EQ(a.ifd_samples.size(), b.ifd_samples.size());
  for (std::size_t r = 0; r < a.ifd_samples.size(); ++r)
    EXPECT_NEAR(a.ifd_samples[r], b.ifd_samples[r], 1e-12 * a.ifd_samples[r]);
  EXPECT_NEAR(a.coi_std, b.coi_std, 1e-12 * a.coi_std);
  EXPECT_NEAR(a.poi_std, b.poi_std, 1e-12 * a.poi_std);
  EXPECT_NEAR(a.ifd_quartiles.median, b.ifd_quartiles.median, 1e-12 * a.ifd_quartiles.median);
  EXPECT_NEAR(a.gfv, b.gfv, 1e-9);
  EXPECT_EQ(a.coi_histogram.total(), b.coi_histogram.total());
}

TEST(RunMonteCarlo, SummaryInvariants) {
  auto cfg = small_config({9, 5}, 5, 3.0);
  auto s = run_monte_carlo(load_fixture("case9.json"), cfg);
  const auto ns = sample_count(cfg.horizon, cfg.dt);
  ASSERT_EQ(s.placements.size(), 2u);
  EXPECT_EQ(s.placements[0].bus_id, 9);
  EXPECT_EQ(s.placements[0].bus_index, 8u);
  for (const auto& p : s.placements) {
    EXPECT_EQ(p.ifd_samples.size(), cfg.n_realizations);
    EXPECT_EQ(p.n_realizations, cfg.n_realizations);
    EXPECT_EQ(p.coi_histogram.total(), cfg.n_realizations * ns);
    EXPECT_EQ(p.poi_histogram.total(), cfg.n_realizations * ns);
    EXPECT_LE(p.ifd_quartiles.q1, p.ifd_quartiles.median);
    EXPECT_LE(p.ifd_quartiles.median, p.ifd_quartiles.q3);
    for (double v : p.ifd_samples) EXPECT_GT(v, 0.0);
  }
}

TEST(RunMonteCarlo, IndependentOfWorkerCount) {
  auto net = load_fixture("case9.json");
  auto cfg = small_config({5, 7}, 9, 2.0);
  cfg.threads = 1;
  auto serial = run_monte_carlo(net, cfg);
  cfg.threads = 4;
  auto parallel = run_monte_carlo(net, cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(serial.placements[i].ifd_samples, parallel.placements[i].ifd_samples);
    EXPECT_EQ(serial.placements[i].coi_histogram.counts, parallel.placements[i].coi_histogram.counts);
    EXPECT_EQ(serial.placements[i].poi_histogram.edges, parallel.placements[i].poi_histogram.edges);
  }
}

TEST(RunMonteCarlo, AddingPlacementsLeavesOthersUnchanged) {
  auto net = load_fixture("case9.json");
  auto alone = run_monte_carlo(net, small_config({5}, 4, 2.0));
  auto with_more = run_monte_carlo(net, small_config({9, 6, 5}, 4, 2.0));
  EXPECT_EQ(alone.placements[0].ifd_samples, with_more.placements[2].ifd_samples);
}

TEST(RunMonteCarlo, LargerDiffusionRaisesMedianIfd) {
  auto net = load_fixture("case9.json");
  auto cfg = small_config({5}, 20, 10.0);
  auto base = run_monte_carlo(net, cfg);
  cfg.ou.b *= 2.0;
  auto doubled = run_monte_carlo(net, cfg);
  EXPECT_GT(doubled.placements[0].ifd_quartiles.median, base.placements[0].ifd_quartiles.median);
}

TEST(RunMonteCarlo, FailedRealizationsMarkPartial) {
  // dt far beyond the explicit integrator's stability limit.
  auto cfg = small_config({5}, 3, 600.0);
  cfg.dt = 1.0;
  auto s = run_monte_carlo(load_fixture("case9.json"), cfg);
  EXPECT_TRUE(s.partial);
  EXPECT_EQ(s.placements[0].failures.size(), 3u);
  EXPECT_TRUE(s.placements[0].ifd_samples.empty());
}

TEST(RunMonteCarlo, ConfigValidation) {
  auto net = load_fixture("case9.json");
  EXPECT_THROW(run_monte_carlo(net, small_config({5}, 0)), DataError);
  EXPECT_THROW(run_monte_carlo(net, small_config({42})), DataError);
  EXPECT_THROW(run_monte_carlo(net, small_config({})), DataError);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 1000);
}

TEST(SampleCount, HorizonOverStep) {
  EXPECT_EQ(sample_count(200.0, 0.01), 20000u);
  EXPECT_EQ(sample_count(1.0, 0.01), 100u);
  EXPECT_THROW(sample_count(0.0, 0.01), DataError);
}

}  // namespace
}  // namespace gridgfv
