#include <gtest/gtest.h>

#include "procal/analytic.hpp"
#include "procal/evaluation.hpp"
#include "test_util.hpp"

using namespace procal;

TEST(AnalyticSources, ClosedFormsAtZero) {
  const auto y = eval_source(0, 0.0, Eigen::VectorXd(0));
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], std::log(11.0), 1e-12);  // 2.39790...
  EXPECT_NEAR(y[2], -1.5, 1e-12);
}

TEST(AnalyticSources, S2AtMinusHalfMatchesTruth) {
  Eigen::VectorXd th(1);
  th << -0.5;
  const auto y = eval_source(2, 1.0, th);
  EXPECT_NEAR(y[0], -0.5, 1e-12);
  EXPECT_NEAR(y[1], std::log(14.5), 1e-12);  // 2.67415...
  EXPECT_NEAR(y[2], -2.0, 1e-12);
  const auto y0 = eval_source(0, 1.0, Eigen::VectorXd(0));
  EXPECT_EQ(y, y0);
}

TEST(AnalyticSources, NoModelFormErrorForS2) {
  Eigen::VectorXd th(1);
  th << -0.5;
  double max_dev = 0.0;
  for (double x : test_grid(1000, GridMode::Linspace)) {
    const auto d = (eval_source(2, x, th) - eval_source(0, x, Eigen::VectorXd(0))).cwiseAbs();
    max_dev = std::max(max_dev, d.maxCoeff());
  }
  EXPECT_LT(max_dev, 1e-12);
}

TEST(AnalyticSources, S1FirstOutputIsThetaFreeAtZero) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 2.2);
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd th(2);
    th << u(rng), u(rng);
    EXPECT_NEAR(eval_source(1, 0.0, th)[0], 2.0, 1e-12);
  }
}

TEST(AnalyticSources, S1HasModelFormError) {
  // At the MSE-optimal parameters, the third output still deviates from the
  // truth somewhere on the grid.
  auto lf = [](double x, const Eigen::VectorXd& th, Eigen::VectorXd& out) {
    Eigen::Vector3d y;
    if (!try_eval_source(1, x, th, y)) return false;
    out = y;
    return true;
  };
  auto hf = [](double x, const Eigen::VectorXd&, Eigen::VectorXd& out) {
    Eigen::Vector3d y;
    if (!try_eval_source(0, x, Eigen::VectorXd(0), y)) return false;
    out = y;
    return true;
  };
  const auto res = theta_mse_oracle(lf, hf, Eigen::Vector2d(-1.0, -1.0), Eigen::Vector2d(2.2, 2.2),
                                    0.02, test_grid(1000, GridMode::Linspace), 3);
  double max_dev = 0.0;
  for (double x : test_grid(1000, GridMode::Linspace)) {
    const auto y1 = eval_source(1, x, res.theta_best);
    const auto y0 = eval_source(0, x, Eigen::VectorXd(0));
    max_dev = std::max(max_dev, std::abs(y1[2] - y0[2]));
  }
  EXPECT_GT(max_dev, 0.1);
}

TEST(AnalyticSources, ArityAndDomainErrors) {
  EXPECT_THROW(eval_source(2, 0.0, Eigen::VectorXd(2)), Error);
  EXPECT_THROW(eval_source(1, 0.0, Eigen::VectorXd(0)), Error);
  // Corner of the s1 box where the log argument goes nonpositive.
  Eigen::VectorXd th(2);
  th << -1.0, -1.0;
  try {
    eval_source(1, 2.2, th);
    FAIL() << "expected a log-domain error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), Error::Kind::Numeric);
    EXPECT_NE(std::string(e.what()).find("s1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("2.2"), std::string::npos);
  }
}

TEST(Generate, DefaultStudySampleCounts) {
  AnalyticConfig cfg;
  const auto ds = generate(cfg, {40, 200, 100}, 5);
  EXPECT_EQ(ds.counts_per_source(), (std::vector<int>{40, 200, 100}));
  EXPECT_EQ(ds.schema.theta_dim(), 3);
}

TEST(Generate, ZeroNoiseMatchesEvaluator) {
  AnalyticConfig cfg;
  cfg.noise_var = {0.0, 0.0, 0.0};
  const auto ds = generate(cfg, {30, 10, 10}, 5);
  for (const auto& r : ds.records) {
    if (r.source_id != 0) continue;
    const auto y = eval_source(0, r.x[0], Eigen::VectorXd(0));
    for (int i = 0; i < 3; ++i) EXPECT_EQ(r.y[i], y[i]);
  }
}

TEST(Generate, LowFidelityIsNoiseFree) {
  AnalyticConfig cfg;
  const auto ds = generate(cfg, {5, 30, 30}, 5);
  const auto slots1 = ds.schema.owned_slots(1);
  const auto slots2 = ds.schema.owned_slots(2);
  for (const auto& r : ds.records) {
    if (r.source_id == 0) continue;
    const auto& slots = r.source_id == 1 ? slots1 : slots2;
    Eigen::VectorXd th(static_cast<Eigen::Index>(slots.size()));
    for (std::size_t p = 0; p < slots.size(); ++p) th[static_cast<Eigen::Index>(p)] = r.theta[slots[p]];
    const auto y = eval_source(r.source_id, r.x[0], th);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(r.y[i], y[i]);
  }
}

TEST(Generate, DeterministicGivenSeed) {
  AnalyticConfig cfg;
  const auto a = generate(cfg, {10, 20, 15}, 77);
  const auto b = generate(cfg, {10, 20, 15}, 77);
  ASSERT_EQ(a.n_records(), b.n_records());
  for (int k = 0; k < a.n_records(); ++k) {
    EXPECT_EQ(a.records[k].x[0], b.records[k].x[0]);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(a.records[k].y[i], b.records[k].y[i]);
  }
  const auto c = generate(cfg, {10, 20, 15}, 78);
  EXPECT_NE(a.records[0].x[0], c.records[0].x[0]);
}

TEST(Generate, NoiseVarianceWithinThreeStandardErrors) {
  AnalyticConfig cfg;
  cfg.sources = {"s0"};
  const int n = 100000;
  const auto noisy = generate(cfg, {n}, 13, /*with_noise=*/true);
  const auto clean = generate(cfg, {n}, 13, /*with_noise=*/false);
  for (int i = 0; i < 3; ++i) {
    double var = 0.0;
    for (int k = 0; k < n; ++k) {
      const double d = noisy.records[k].y[i] - clean.records[k].y[i];
      var += d * d;
    }
    var /= n;
    const double target = cfg.noise_var[static_cast<std::size_t>(i)];
    const double se = target * std::sqrt(2.0 / (n - 1));
    EXPECT_NEAR(var, target, 3.0 * se) << "output " << i;
  }
}

TEST(TestGrid, EndpointsAndRange) {
  const auto two = test_grid(2, GridMode::Linspace);
  EXPECT_EQ(two[0], -1.0);
  EXPECT_EQ(two[1], 2.2);
  const auto xs = test_grid(1000, GridMode::Random, 3);
  EXPECT_EQ(xs.size(), 1000u);
  for (double x : xs) {
    EXPECT_GE(x, -1.0);
    EXPECT_LE(x, 2.2);
  }
  EXPECT_EQ(test_grid(1000, GridMode::Random, 3), xs);
  EXPECT_THROW(test_grid(1, GridMode::Linspace), Error);
}

TEST(GenerateStudy, SplitSizesFollowProtocol) {
  AnalyticConfig cfg;
  cfg.n_test = 100;
  const auto b = generate_study(cfg);
  EXPECT_EQ(b.train.counts_per_source(), (std::vector<int>{40, 200, 100}));
  EXPECT_EQ(b.val.counts_per_source(), (std::vector<int>{10, 50, 25}));
  EXPECT_EQ(b.test.counts_per_source(), (std::vector<int>{100, 100, 100}));
  // Test targets are noise-free truth.
  for (const auto& r : b.test.records) {
    if (r.source_id != 0) continue;
    const auto y = eval_source(0, r.x[0], Eigen::VectorXd(0));
    for (int i = 0; i < 3; ++i) EXPECT_EQ(r.y[i], y[i]);
  }
}
