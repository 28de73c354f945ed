#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "procal/loss.hpp"
#include "procal/network.hpp"
#include "test_util.hpp"

using namespace procal;

namespace {

// Hand-built two-source dataset with one categorical variable, for the
// block-2 path the analytic benchmark never exercises.
MultiSourceDataset make_cat_dataset() {
  MultiSourceDataset ds;
  ds.schema.x_dim = 1;
  ds.schema.y_dim = 1;
  ds.schema.cat_cards = {3};
  ds.schema.theta_union = {"k"};
  ds.schema.sources.push_back({0, "hf", true, {}, 0});
  ds.schema.sources.push_back({1, "lf", false, {"k"}, 0});
  ds.domain.names = {"k"};
  ds.domain.lower = Eigen::VectorXd::Constant(1, 0.0);
  ds.domain.upper = Eigen::VectorXd::Constant(1, 1.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 24; ++k) {
    Record r;
    r.source_id = k % 2;
    r.x = Eigen::VectorXd::Constant(1, u(rng) * 4.0 - 2.0);
    r.cat = {k % 3};
    r.theta = Eigen::VectorXd::Constant(1, 0.0);
    r.theta_present = {0};
    if (r.source_id == 1) {
      r.theta[0] = u(rng);
      r.theta_present = {1};
    }
    r.y = Eigen::VectorXd::Constant(1, std::sin(r.x[0]) + 0.2 * r.cat[0] + u(rng) * 0.1);
    ds.records.push_back(std::move(r));
  }
  ds.refresh_counts();
  return ds;
}

}  // namespace

TEST(Network, InitIsDeterministic) {
  auto a = ptest::make_fixture();
  auto b = ptest::make_fixture();
  EXPECT_EQ(a.net.save_values(), b.net.save_values());
  Network other;
  other.init(NetworkConfig{}, a.std_ds, 999);
  EXPECT_NE(a.net.save_values(), other.save_values());
}

TEST(Network, SourceEmbeddingDeterministicAndDistinct) {
  auto f = ptest::make_fixture();
  const auto z0 = f.net.encode_source(0);
  EXPECT_EQ(z0, f.net.encode_source(0));
  EXPECT_NE(z0, f.net.encode_source(1));
  EXPECT_NE(f.net.encode_source(1), f.net.encode_source(2));
  EXPECT_THROW(f.net.encode_source(3), Error);
}

TEST(Network, HighFidelityMaskingInvarianceIsBitExact) {
  auto f = ptest::make_fixture();
  Record hf;
  hf.source_id = 0;
  hf.x = Eigen::VectorXd::Constant(1, 0.3);
  hf.theta = Eigen::VectorXd::Zero(3);
  hf.theta_present = {0, 0, 0};
  hf.y = Eigen::VectorXd::Zero(3);

  const auto ref = f.net.predict_emulation(hf);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int trial = 0; trial < 100; ++trial) {
    Record dummy = hf;
    for (int i = 0; i < 3; ++i) dummy.theta[i] = u(rng);
    const auto out = f.net.predict_emulation(dummy);
    ASSERT_EQ(0, std::memcmp(ref.mean.data(), out.mean.data(), sizeof(double) * 3));
    ASSERT_EQ(0, std::memcmp(ref.stddev.data(), out.stddev.data(), sizeof(double) * 3));
  }
}

TEST(Network, ZeroMaskedCalibrationEncodingIgnoresDummies) {
  auto f = ptest::make_fixture();
  const auto zs = f.net.encode_source(0);
  Record r;
  r.source_id = 0;
  r.theta = Eigen::Vector3d(4.0, -4.0, 9.0);
  r.theta_present = {0, 0, 0};
  const auto masked_a = f.net.mask_input(0, r.theta, r.theta_present, Eigen::VectorXd::Zero(3));
  const auto masked_b =
      f.net.mask_input(0, Eigen::Vector3d(1.0, 2.0, 3.0), r.theta_present, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(f.net.encode_calibration(zs, masked_a), f.net.encode_calibration(zs, masked_b));
  // Distinct owned inputs map to distinct latents for an LF source.
  const auto zs1 = f.net.encode_source(1);
  Eigen::VectorXd ta = Eigen::Vector3d(0.2, 0.1, 0.0);
  Eigen::VectorXd tb = Eigen::Vector3d(-0.7, 0.9, 0.0);
  EXPECT_NE(f.net.encode_calibration(zs1, ta), f.net.encode_calibration(zs1, tb));
}

TEST(Network, SampleThetaZeroNoiseIsClampedMean) {
  auto f = ptest::make_fixture();
  for (const auto& cs : f.net.calib()) {
    const auto s = f.net.sample_theta(cs.source_id, Eigen::VectorXd::Zero(cs.n_params()));
    for (int p = 0; p < cs.n_params(); ++p) {
      const int slot = cs.slots[static_cast<std::size_t>(p)];
      EXPECT_EQ(s.theta[p], f.net.clamp_value(slot, cs.mu_raw[p]));
      EXPECT_GT(s.theta[p], f.net.lb_std(slot));
      EXPECT_LT(s.theta[p], f.net.ub_std(slot));
    }
  }
}

TEST(Network, SaturatedMeanStaysStrictlyInside) {
  auto f = ptest::make_fixture();
  auto& cs = f.net.calib()[0];
  cs.mu_raw[0] = 1e9;
  const auto hi = f.net.sample_theta(cs.source_id, Eigen::VectorXd::Zero(cs.n_params()));
  EXPECT_LT(hi.theta[0], f.net.ub_std(cs.slots[0]));
  cs.mu_raw[0] = -1e9;
  const auto lo = f.net.sample_theta(cs.source_id, Eigen::VectorXd::Zero(cs.n_params()));
  EXPECT_GT(lo.theta[0], f.net.lb_std(cs.slots[0]));
}

TEST(Network, SampleThetaGradientMatchesFiniteDifferences) {
  auto f = ptest::make_fixture();
  auto& cs = f.net.calib()[0];
  std::mt19937_64 rng(21);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double h = 1e-6;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd eps(cs.n_params());
    for (int p = 0; p < cs.n_params(); ++p) eps[p] = gauss(rng);
    cs.mu_raw[0] = gauss(rng);
    const auto s = f.net.sample_theta(cs.source_id, eps);
    const double base_mu = cs.mu_raw[0];

    cs.mu_raw[0] = base_mu + h;
    const double up = f.net.sample_theta(cs.source_id, eps).theta[0];
    cs.mu_raw[0] = base_mu - h;
    const double dn = f.net.sample_theta(cs.source_id, eps).theta[0];
    cs.mu_raw[0] = base_mu;
    const double fd = (up - dn) / (2.0 * h);
    EXPECT_NEAR(s.dtheta_dmu[0], fd, 1e-5 * std::max(1.0, std::abs(fd)));

    const double base_ls = cs.log_sigma[0];
    cs.log_sigma[0] = base_ls + h;
    const double up2 = f.net.sample_theta(cs.source_id, eps).theta[0];
    cs.log_sigma[0] = base_ls - h;
    const double dn2 = f.net.sample_theta(cs.source_id, eps).theta[0];
    cs.log_sigma[0] = base_ls;
    const double fd2 = (up2 - dn2) / (2.0 * h);
    EXPECT_NEAR(s.dtheta_dlogsig[0], fd2, 1e-5 * std::max(1.0, std::abs(fd2)));
  }
}

TEST(Network, ClampedSamplesStayInsideDomain) {
  auto f = ptest::make_fixture();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const auto& cs : f.net.calib()) {
    for (int m = 0; m < 20000; ++m) {
      Eigen::VectorXd eps(cs.n_params());
      for (int p = 0; p < cs.n_params(); ++p) eps[p] = gauss(rng);
      const auto s = f.net.sample_theta(cs.source_id, eps);
      for (int p = 0; p < cs.n_params(); ++p) {
        const int slot = cs.slots[static_cast<std::size_t>(p)];
        ASSERT_GT(s.theta[p], f.net.lb_std(slot));
        ASSERT_LT(s.theta[p], f.net.ub_std(slot));
      }
    }
  }
}

TEST(Network, PosteriorInitialization) {
  auto f = ptest::make_fixture();
  for (const auto& cs : f.net.calib()) {
    for (int p = 0; p < cs.n_params(); ++p) {
      const int slot = cs.slots[static_cast<std::size_t>(p)];
      double mean = 0.0;
      int n = 0;
      for (const auto& r : f.std_ds.records) {
        if (r.source_id != cs.source_id) continue;
        mean += r.theta[slot];
        ++n;
      }
      mean /= n;
      EXPECT_NEAR(f.net.clamp_value(slot, cs.mu_raw[p]), mean, 1e-9);
      const double width = f.net.ub_std(slot) - f.net.lb_std(slot);
      EXPECT_NEAR(std::exp(cs.log_sigma[p]), 0.25 * width, 1e-12);
    }
  }
}

TEST(Network, UniformThetaInitialMeanNearPointSix) {
  // Uniform theta on [-1, 2.2] has mean 0.6; the initial clamp(mu) recovers
  // the sample mean in physical units.
  auto f = ptest::make_fixture({"s0", "s2"}, {20, 400}, 29);
  const auto& cs = f.net.calib()[0];
  const int slot = cs.slots[0];
  const double phys =
      f.scaler.theta[static_cast<std::size_t>(slot)].inverse(f.net.clamp_value(slot, cs.mu_raw[0]));
  EXPECT_NEAR(phys, 0.6, 3.2 / std::sqrt(12.0 * 400) * 4.0);  // ~4 standard errors
}

TEST(Network, SampleThetaContractForHighFidelity) {
  auto f = ptest::make_fixture();
  EXPECT_THROW(f.net.sample_theta(0, Eigen::VectorXd(0)), Error);
}

TEST(Network, UntrainedForwardIsWellFormed) {
  auto f = ptest::make_fixture();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    Record r;
    r.source_id = static_cast<int>(rng() % 3);
    r.x = Eigen::VectorXd::Constant(1, u(rng));
    r.theta = Eigen::Vector3d(u(rng), u(rng), u(rng));
    r.theta_present.assign(3, 0);
    for (int slot : f.std_ds.schema.owned_slots(r.source_id))
      r.theta_present[static_cast<std::size_t>(slot)] = 1;
    const auto d = f.net.predict_emulation(r);
    for (int i = 0; i < 3; ++i) {
      EXPECT_TRUE(std::isfinite(d.mean[i]));
      EXPECT_GT(d.stddev[i], 0.0);
    }
  }
}

TEST(Network, CalibrationModeContracts) {
  auto f = ptest::make_fixture();
  EXPECT_THROW(
      f.net.predict_calibration(0, Eigen::VectorXd::Constant(1, 0.1), {}, Eigen::VectorXd(0)),
      Error);
  Eigen::VectorXd hat(1);
  hat << 0.2;
  EXPECT_NO_THROW(f.net.predict_calibration(2, Eigen::VectorXd::Constant(1, 0.1), {}, hat));
}

TEST(Network, JsonRoundTripIsBitExact) {
  auto f = ptest::make_fixture();
  const auto j = f.net.to_json();
  auto restored = Network::from_json(nlohmann::json::parse(j.dump()));
  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    Record r;
    r.source_id = static_cast<int>(rng() % 3);
    r.x = Eigen::VectorXd::Constant(1, u(rng));
    r.theta = Eigen::Vector3d(u(rng), u(rng), u(rng));
    r.theta_present.assign(3, 1);
    const auto a = f.net.predict_emulation(r);
    const auto b = restored.predict_emulation(r);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.stddev, b.stddev);
  }
}

TEST(Network, CategoricalBlockPath) {
  auto raw = make_cat_dataset();
  const auto scaler = fit_standardizer(raw);
  const auto std_ds = apply_standardizer(raw, scaler);
  Network net;
  net.init(NetworkConfig{}, std_ds, 7);
  EXPECT_TRUE(net.config().has_categoricals());
  EXPECT_NE(net.encode_categorical({0}), net.encode_categorical({2}));
  const auto batch = BatchView::assemble(std_ds);
  ForwardCache fc;
  net.forward_batch(batch.S, batch.ThetaData, batch.Cat, batch.X, fc);
  EXPECT_EQ(fc.mu.rows(), std_ds.n_records());
  const auto d = net.predict_emulation(std_ds.records[0]);
  EXPECT_TRUE(std::isfinite(d.mean[0]));
  EXPECT_GT(d.stddev[0], 0.0);
}
