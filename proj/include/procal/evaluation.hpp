#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "procal/network.hpp"
#include "procal/trainer.hpp"

namespace procal {

// Root-mean-squared error normalized by the population spread of the true
// targets, so a mean predictor scores 1.
inline double rrmse(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  require(y_true.size() == y_pred.size() && y_true.size() > 0, Error::Kind::Contract,
          "rrmse: size mismatch");
  const double mean = y_true.mean();
  double var = 0.0, mse = 0.0;
  for (Eigen::Index k = 0; k < y_true.size(); ++k) {
    var += (y_true[k] - mean) * (y_true[k] - mean);
    mse += (y_pred[k] - y_true[k]) * (y_pred[k] - y_true[k]);
  }
  var /= static_cast<double>(y_true.size());
  mse /= static_cast<double>(y_true.size());
  require(var > 0.0, Error::Kind::Data, "rrmse: degenerate (constant) targets");
  return std::sqrt(mse) / std::sqrt(var);
}

// ---------------------------------------------------------------------------
// Brute-force reference: exhaustive grid search for the calibration values
// minimizing the noise-free mean-squared discrepancy against the HF source,
// aggregated over outputs in HF-spread units. Entirely independent of the
// network; this is the oracle the posteriors are compared to.

using SourceEvaluator = std::function<bool(double, const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct OracleResult {
  Eigen::VectorXd theta_best;
  double mse_best = 0.0;
  std::vector<std::pair<Eigen::VectorXd, double>> surface;  // (theta, mse) per feasible grid point
  int skipped = 0;
};

inline OracleResult theta_mse_oracle(const SourceEvaluator& lf, const SourceEvaluator& hf,
                                     const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                     double resolution, const std::vector<double>& x_grid,
                                     int n_outputs) {
  require(lower.size() == upper.size() && lower.size() >= 1, Error::Kind::Contract,
          "oracle: domain dimension mismatch");
  require(resolution > 0.0, Error::Kind::Contract, "oracle: resolution must be positive");
  require(x_grid.size() >= 2, Error::Kind::Contract, "oracle: x grid too small");

  const int d = static_cast<int>(lower.size());
  // HF truth over the grid, plus per-output spread for the aggregation weights.
  Eigen::MatrixXd hf_y(static_cast<Eigen::Index>(x_grid.size()), n_outputs);
  Eigen::VectorXd tmp(n_outputs);
  for (std::size_t k = 0; k < x_grid.size(); ++k) {
    require(hf(x_grid[k], Eigen::VectorXd(0), tmp), Error::Kind::Numeric,
            "oracle: high-fidelity evaluator failed on the x grid");
    hf_y.row(static_cast<Eigen::Index>(k)) = tmp.transpose();
  }
  Eigen::VectorXd weight(n_outputs);
  for (int i = 0; i < n_outputs; ++i) {
    const double mean = hf_y.col(i).mean();
    const double var = (hf_y.col(i).array() - mean).square().mean();
    require(var > 0.0, Error::Kind::Data, "oracle: constant high-fidelity output");
    weight[i] = 1.0 / var;
  }

  std::vector<int> steps(static_cast<std::size_t>(d));
  for (int a = 0; a < d; ++a)
    steps[static_cast<std::size_t>(a)] = static_cast<int>(std::floor((upper[a] - lower[a]) / resolution + 1e-9)) + 1;

  OracleResult out;
  out.mse_best = std::numeric_limits<double>::infinity();
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  Eigen::VectorXd theta(d), y(n_outputs);
  while (true) {
    for (int a = 0; a < d; ++a) theta[a] = lower[a] + resolution * idx[static_cast<std::size_t>(a)];
    double acc = 0.0;
    bool feasible = true;
    for (std::size_t k = 0; k < x_grid.size() && feasible; ++k) {
      if (!lf(x_grid[k], theta, y)) {
        feasible = false;
        break;
      }
      for (int i = 0; i < n_outputs; ++i) {
        const double r = y[i] - hf_y(static_cast<Eigen::Index>(k), i);
        acc += weight[i] * r * r;
      }
    }
    if (feasible) {
      const double mse = acc / (static_cast<double>(x_grid.size()) * n_outputs);
      out.surface.emplace_back(theta, mse);
      if (mse < out.mse_best) {
        out.mse_best = mse;
        out.theta_best = theta;
      }
    } else {
      ++out.skipped;
    }
    int a = 0;
    while (a < d) {
      if (++idx[static_cast<std::size_t>(a)] < steps[static_cast<std::size_t>(a)]) break;
      idx[static_cast<std::size_t>(a)] = 0;
      ++a;
    }
    if (a == d) break;
  }
  require(out.theta_best.size() == d, Error::Kind::Numeric, "oracle: no feasible grid point");
  return out;
}

// ---------------------------------------------------------------------------
// Posterior summaries via Monte Carlo through the clamped reparameterized
// draw, reported in physical units.

struct PosteriorSummary {
  int source_id = 0;
  std::string source_name;
  std::string param_name;
  double mean = 0.0;
  double stddev = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  double mu_raw = 0.0;     // unconstrained mean parameter
  double sigma_raw = 0.0;  // exp(log-std), standardized coordinates
  double clamp_mu = 0.0;   // clamp(mu) in physical units
};

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
  const std::size_t i = static_cast<std::size_t>(pos);
  if (i + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(i);
  return sorted[i] * (1.0 - frac) + sorted[i + 1] * frac;
}

inline std::vector<PosteriorSummary> posterior_report(const Network& net, const Standardizer& scaler,
                                                      int n_mc, std::uint64_t seed) {
  require(n_mc >= 1, Error::Kind::Contract, "posterior_report: n_mc must be positive");
  std::vector<PosteriorSummary> out;
  auto rng = substream(seed, "mc");
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const auto& cs : net.calib()) {
    std::vector<std::vector<double>> samples(static_cast<std::size_t>(cs.n_params()));
    for (int m = 0; m < n_mc; ++m) {
      Eigen::VectorXd eps(cs.n_params());
      for (int p = 0; p < cs.n_params(); ++p) eps[p] = gauss(rng);
      const auto draw = net.sample_theta(cs.source_id, eps);
      for (int p = 0; p < cs.n_params(); ++p) {
        const int slot = cs.slots[static_cast<std::size_t>(p)];
        samples[static_cast<std::size_t>(p)].push_back(
            scaler.theta[static_cast<std::size_t>(slot)].inverse(draw.theta[p]));
      }
    }
    for (int p = 0; p < cs.n_params(); ++p) {
      auto& v = samples[static_cast<std::size_t>(p)];
      std::sort(v.begin(), v.end());
      double mean = 0.0;
      for (double s : v) mean += s;
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (double s : v) var += (s - mean) * (s - mean);
      var /= static_cast<double>(v.size());
      const int slot = cs.slots[static_cast<std::size_t>(p)];
      PosteriorSummary ps;
      ps.source_id = cs.source_id;
      ps.source_name = net.source_names()[static_cast<std::size_t>(cs.source_id)];
      ps.param_name = cs.names[static_cast<std::size_t>(p)];
      ps.mean = mean;
      ps.stddev = std::sqrt(var);
      ps.q025 = quantile_sorted(v, 0.025);
      ps.q975 = quantile_sorted(v, 0.975);
      ps.mu_raw = cs.mu_raw[p];
      ps.sigma_raw = std::exp(cs.log_sigma[p]);
      ps.clamp_mu = scaler.theta[static_cast<std::size_t>(slot)].inverse(net.clamp_value(slot, cs.mu_raw[p]));
      out.push_back(ps);
    }
  }
  return out;
}

// Posterior mean of the clamped estimates in standardized coordinates, ready
// to feed the network.
inline Eigen::VectorXd posterior_mean_std(const Network& net, const CalibSource& cs, int n_mc,
                                          std::uint64_t seed) {
  auto rng = substream(seed, "mc/" + std::to_string(cs.source_id));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(cs.n_params());
  for (int m = 0; m < n_mc; ++m) {
    Eigen::VectorXd eps(cs.n_params());
    for (int p = 0; p < cs.n_params(); ++p) eps[p] = gauss(rng);
    acc += net.sample_theta(cs.source_id, eps).theta;
  }
  return acc / static_cast<double>(n_mc);
}

// ---------------------------------------------------------------------------
// Emulation accuracy against the high-fidelity truth: direct HF emulation and
// each calibrated low-fidelity source emulating HF at its posterior mean.

struct EvalRow {
  std::string label;
  std::vector<double> rrmse_per_output;
};

inline std::vector<EvalRow> emulate_hf_suite(const Network& net, const MultiSourceDataset& test_std,
                                             int n_mc, std::uint64_t seed) {
  require(test_std.standardized, Error::Kind::Contract, "emulate_hf_suite expects standardized data");
  const int ny = net.config().y_dim;
  const int hf_id = test_std.schema.hf_source_id();

  std::vector<const Record*> hf_records;
  for (const auto& r : test_std.records)
    if (r.source_id == hf_id) hf_records.push_back(&r);
  require(!hf_records.empty(), Error::Kind::Data, "no high-fidelity rows in the test set");
  const int n = static_cast<int>(hf_records.size());

  Eigen::MatrixXd y_true(n, ny);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < ny; ++i)
      y_true(k, i) = test_std.scaler.y[static_cast<std::size_t>(i)].inverse(hf_records[static_cast<std::size_t>(k)]->y[i]);

  std::vector<EvalRow> rows;
  auto add_row = [&](const std::string& label, const std::function<PredictiveDistribution(const Record&)>& predict) {
    Eigen::MatrixXd y_pred(n, ny);
    for (int k = 0; k < n; ++k) {
      const auto d = predict(*hf_records[static_cast<std::size_t>(k)]);
      for (int i = 0; i < ny; ++i)
        y_pred(k, i) = test_std.scaler.y[static_cast<std::size_t>(i)].inverse(d.mean[i]);
    }
    EvalRow row;
    row.label = label;
    for (int i = 0; i < ny; ++i) row.rrmse_per_output.push_back(rrmse(y_true.col(i), y_pred.col(i)));
    rows.push_back(std::move(row));
  };

  add_row("hf_emulation", [&](const Record& r) { return net.predict_emulation(r); });
  for (const auto& cs : net.calib()) {
    const Eigen::VectorXd theta_hat = posterior_mean_std(net, cs, n_mc, seed);
    const std::string name = net.source_names()[static_cast<std::size_t>(cs.source_id)];
    add_row("calibrated_" + name, [&net, &cs, theta_hat](const Record& r) {
      return net.predict_calibration(cs.source_id, r.x, r.cat, theta_hat);
    });
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Latent-space export: source embeddings, calibration-latent clouds under the
// uniform prior and under the learned posterior, the HF zero-mask point, and
// the HF-to-calibrated distances.

struct LatentCloud {
  std::string label;
  Eigen::MatrixXd points;  // (n, latent_dim)
};

struct LatentTrace {
  std::vector<std::pair<std::string, Eigen::VectorXd>> z_source;  // one per source
  std::vector<std::pair<std::string, LatentCloud>> z_theta_prior;
  std::vector<std::pair<std::string, LatentCloud>> z_theta_posterior;
  Eigen::VectorXd z_theta_hf;
  std::vector<std::pair<std::string, double>> hf_distance;  // at the posterior mean
};

inline double bbox_area(const Eigen::MatrixXd& pts) {
  if (pts.rows() == 0) return 0.0;
  double area = 1.0;
  for (Eigen::Index c = 0; c < pts.cols(); ++c)
    area *= pts.col(c).maxCoeff() - pts.col(c).minCoeff();
  return area;
}

inline LatentTrace export_latents(const Network& net, const Standardizer& scaler,
                                  const CalibDomain& domain, int n_probe, std::uint64_t seed) {
  require(n_probe >= 2, Error::Kind::Contract, "export_latents: n_probe must be >= 2");
  LatentTrace trace;
  const int dth = net.config().theta_dim;
  for (int s = 0; s < net.config().n_sources; ++s)
    trace.z_source.emplace_back(net.source_names()[static_cast<std::size_t>(s)], net.encode_source(s));

  const int hf_id = [&net] {
    for (int s = 0; s < net.config().n_sources; ++s)
      if (net.is_hf(s)) return s;
    return 0;
  }();
  trace.z_theta_hf = net.encode_calibration(net.encode_source(hf_id), Eigen::VectorXd::Zero(dth));

  auto rng = substream(seed, "latents");
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const auto& cs : net.calib()) {
    const std::string name = net.source_names()[static_cast<std::size_t>(cs.source_id)];
    const Eigen::VectorXd zs = net.encode_source(cs.source_id);

    LatentCloud prior{name, Eigen::MatrixXd(n_probe, net.config().latent_dim)};
    LatentCloud post{name, Eigen::MatrixXd(n_probe, net.config().latent_dim)};
    for (int m = 0; m < n_probe; ++m) {
      Eigen::VectorXd theta = Eigen::VectorXd::Zero(dth);
      for (int p = 0; p < cs.n_params(); ++p) {
        const int slot = cs.slots[static_cast<std::size_t>(p)];
        std::uniform_real_distribution<double> u(domain.lower[slot], domain.upper[slot]);
        theta[slot] = scaler.theta[static_cast<std::size_t>(slot)].transform(u(rng));
      }
      prior.points.row(m) = net.encode_calibration(zs, theta).transpose();

      Eigen::VectorXd eps(cs.n_params());
      for (int p = 0; p < cs.n_params(); ++p) eps[p] = gauss(rng);
      const auto draw = net.sample_theta(cs.source_id, eps);
      Eigen::VectorXd theta_hat = Eigen::VectorXd::Zero(dth);
      for (int p = 0; p < cs.n_params(); ++p) theta_hat[cs.slots[static_cast<std::size_t>(p)]] = draw.theta[p];
      post.points.row(m) = net.encode_calibration(zs, theta_hat).transpose();
    }
    trace.z_theta_prior.emplace_back(name, std::move(prior));
    trace.z_theta_posterior.emplace_back(name, std::move(post));

    const Eigen::VectorXd mean_hat = posterior_mean_std(net, cs, 2048, seed);
    Eigen::VectorXd theta_mean = Eigen::VectorXd::Zero(dth);
    for (int p = 0; p < cs.n_params(); ++p) theta_mean[cs.slots[static_cast<std::size_t>(p)]] = mean_hat[p];
    const Eigen::VectorXd z_cal = net.encode_calibration(zs, theta_mean);
    trace.hf_distance.emplace_back(name, (z_cal - trace.z_theta_hf).norm());
  }
  return trace;
}

}  // namespace procal
