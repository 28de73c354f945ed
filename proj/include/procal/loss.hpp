#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "procal/dataset.hpp"
#include "procal/network.hpp"

namespace procal {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;
inline constexpr double kIntervalZ = 1.96;  // 95% central interval

struct LossConfig {
  double beta_is = 0.1;
  double beta_kl = 0.01;
  double phi = 0.05;
  double sigma_p = 1.0;

  void validate() const {
    require(beta_is >= 0.0 && beta_kl >= 0.0, Error::Kind::Config, "loss weights must be nonnegative");
    require(phi > 0.0 && phi < 1.0, Error::Kind::Config, "phi must lie in (0, 1)");
    require(sigma_p > 0.0, Error::Kind::Config, "sigma_p must be positive");
  }

  nlohmann::json to_json() const {
    return {{"beta_is", beta_is}, {"beta_kl", beta_kl}, {"phi", phi}, {"sigma_p", sigma_p}};
  }
  static LossConfig from_json(const nlohmann::json& j) {
    LossConfig c;
    if (j.contains("beta_is")) c.beta_is = j.at("beta_is").get<double>();
    if (j.contains("beta_kl")) c.beta_kl = j.at("beta_kl").get<double>();
    if (j.contains("phi")) c.phi = j.at("phi").get<double>();
    if (j.contains("sigma_p")) c.sigma_p = j.at("sigma_p").get<double>();
    c.validate();
    return c;
  }
};

// Composite objective with its per-source / per-output breakdown. The *_parts
// tables are indexed [source_id][output]; calibration rows stay zero for the
// high-fidelity source.
struct LossReport {
  double total = 0.0;
  double nll_em = 0.0, nll_cal = 0.0, is_em = 0.0, is_cal = 0.0, kl = 0.0;
  std::vector<std::vector<double>> nll_em_parts, nll_cal_parts, is_em_parts, is_cal_parts;
  std::vector<double> kl_parts;

  void init_parts(int n_sources, int y_dim) {
    auto zeros = std::vector<std::vector<double>>(
        static_cast<std::size_t>(n_sources), std::vector<double>(static_cast<std::size_t>(y_dim), 0.0));
    nll_em_parts = nll_cal_parts = is_em_parts = is_cal_parts = zeros;
    kl_parts.assign(static_cast<std::size_t>(n_sources), 0.0);
  }

  double recompute_total(const LossConfig& cfg) const {
    auto sum = [](const std::vector<std::vector<double>>& parts) {
      double s = 0.0;
      for (const auto& row : parts)
        for (double v : row) s += v;
      return s;
    };
    double klsum = 0.0;
    for (double v : kl_parts) klsum += v;
    return sum(nll_em_parts) + sum(nll_cal_parts) + cfg.beta_is * (sum(is_em_parts) + sum(is_cal_parts)) +
           cfg.beta_kl * klsum;
  }

  // Name of the first non-finite component, or empty when everything is fine.
  std::string first_non_finite() const {
    const std::pair<const char*, double> scalars[] = {
        {"nll_em", nll_em}, {"nll_cal", nll_cal}, {"is_em", is_em},
        {"is_cal", is_cal}, {"kl", kl},           {"total", total}};
    for (const auto& [name, v] : scalars)
      if (!std::isfinite(v)) return name;
    return {};
  }

  nlohmann::json to_json() const {
    return {{"total", total},
            {"nll_em", nll_em},
            {"nll_cal", nll_cal},
            {"is_em", is_em},
            {"is_cal", is_cal},
            {"kl", kl},
            {"nll_em_parts", nll_em_parts},
            {"nll_cal_parts", nll_cal_parts},
            {"is_em_parts", is_em_parts},
            {"is_cal_parts", is_cal_parts},
            {"kl_parts", kl_parts}};
  }
};

// ---------------------------------------------------------------------------
// Closed-form scalar scores.

inline double nll(const Eigen::VectorXd& y, const Eigen::VectorXd& mu, const Eigen::VectorXd& sigma) {
  require(y.size() == mu.size() && mu.size() == sigma.size() && y.size() > 0, Error::Kind::Contract,
          "nll: size mismatch");
  require((sigma.array() > 0.0).all(), Error::Kind::Contract, "nll: sigma must be positive");
  double acc = 0.0;
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    const double z = (y[k] - mu[k]) / sigma[k];
    acc += kHalfLog2Pi + std::log(sigma[k]) + 0.5 * z * z;
  }
  return acc / static_cast<double>(y.size());
}

inline double interval_score(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                             const Eigen::VectorXd& sigma, double phi) {
  require(y.size() == mu.size() && mu.size() == sigma.size() && y.size() > 0, Error::Kind::Contract,
          "interval_score: size mismatch");
  require((sigma.array() > 0.0).all(), Error::Kind::Contract, "interval_score: sigma must be positive");
  require(phi > 0.0 && phi < 1.0, Error::Kind::Contract, "interval_score: phi must lie in (0,1)");
  double acc = 0.0;
  for (Eigen::Index k = 0; k < y.size(); ++k) {
    const double l = mu[k] - kIntervalZ * sigma[k];
    const double u = mu[k] + kIntervalZ * sigma[k];
    double v = u - l;
    if (y[k] < l) v += (2.0 / phi) * (l - y[k]);
    if (y[k] > u) v += (2.0 / phi) * (y[k] - u);
    acc += v;
  }
  return acc / static_cast<double>(y.size());
}

// Divergence on the posterior standard deviations only; the means carry the
// calibration estimates and are left unregularized.
inline double kl_term(const std::vector<CalibSource>& calib, double sigma_p) {
  require(sigma_p > 0.0, Error::Kind::Contract, "kl_term: sigma_p must be positive");
  double acc = 0.0;
  for (const auto& c : calib) {
    for (int p = 0; p < c.n_params(); ++p) {
      const double sig = std::exp(c.log_sigma[p]);
      require(sig > 0.0 && std::isfinite(sig), Error::Kind::Contract, "kl_term: sigma must be positive");
      acc += std::log(sig / sigma_p) + sigma_p / (2.0 * sig) - 0.5;
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Batched training view of a standardized dataset.

struct BatchView {
  Eigen::MatrixXd S;          // one-hot source indicators
  Eigen::MatrixXd X;
  Eigen::MatrixXd Cat;        // concatenated one-hot categoricals (n x 0 if none)
  Eigen::MatrixXd ThetaData;  // absent entries zero
  Eigen::MatrixXd OwnedMask;  // 1 where the row's source owns+carries the slot
  Eigen::MatrixXd Y;
  std::vector<int> source_of_row;
  std::vector<int> rows_per_source;
  std::vector<int> hf_rows;
  int n_sources = 0;
  int y_dim = 0;

  int n_rows() const { return static_cast<int>(source_of_row.size()); }

  static BatchView assemble(const MultiSourceDataset& ds, const std::vector<int>& indices) {
    require(ds.standardized, Error::Kind::Contract, "batches must be assembled from standardized data");
    const auto& schema = ds.schema;
    BatchView b;
    const int n = static_cast<int>(indices.size());
    b.n_sources = schema.n_sources();
    b.y_dim = schema.y_dim;
    b.S = Eigen::MatrixXd::Zero(n, schema.n_sources());
    b.X.resize(n, schema.x_dim);
    int cat_dim = 0;
    for (int c : schema.cat_cards) cat_dim += c;
    b.Cat = Eigen::MatrixXd::Zero(n, cat_dim);
    b.ThetaData = Eigen::MatrixXd::Zero(n, schema.theta_dim());
    b.OwnedMask = Eigen::MatrixXd::Zero(n, schema.theta_dim());
    b.Y.resize(n, schema.y_dim);
    b.rows_per_source.assign(static_cast<std::size_t>(schema.n_sources()), 0);
    const int hf_id = schema.hf_source_id();

    for (int k = 0; k < n; ++k) {
      const Record& r = ds.records.at(static_cast<std::size_t>(indices[static_cast<std::size_t>(k)]));
      b.S(k, r.source_id) = 1.0;
      b.X.row(k) = r.x.transpose();
      int at = 0;
      for (std::size_t c = 0; c < schema.cat_cards.size(); ++c) {
        b.Cat(k, at + r.cat[c]) = 1.0;
        at += schema.cat_cards[c];
      }
      for (int i = 0; i < schema.theta_dim(); ++i) {
        if (r.theta_present[static_cast<std::size_t>(i)]) {
          b.ThetaData(k, i) = r.theta[i];
          b.OwnedMask(k, i) = 1.0;
        }
      }
      b.Y.row(k) = r.y.transpose();
      b.source_of_row.push_back(r.source_id);
      b.rows_per_source[static_cast<std::size_t>(r.source_id)]++;
      if (r.source_id == hf_id) b.hf_rows.push_back(k);
    }
    return b;
  }

  static BatchView assemble(const MultiSourceDataset& ds) {
    std::vector<int> all(static_cast<std::size_t>(ds.n_records()));
    std::iota(all.begin(), all.end(), 0);
    return assemble(ds, all);
  }
};

namespace detail {

// Emulation theta input: data values where owned, fill elsewhere,
// all-zero rows for the high-fidelity source.
inline Eigen::MatrixXd emulation_theta(const Network& net, const BatchView& b,
                                       const Eigen::VectorXd& fill) {
  const int n = b.n_rows();
  const int d = net.config().theta_dim;
  require(fill.size() == d, Error::Kind::Contract, "emulation fill has wrong width");
  Eigen::MatrixXd theta(n, d);
  for (int k = 0; k < n; ++k) {
    if (net.is_hf(b.source_of_row[static_cast<std::size_t>(k)])) {
      theta.row(k).setZero();
      continue;
    }
    for (int i = 0; i < d; ++i)
      theta(k, i) = b.OwnedMask(k, i) != 0.0 ? b.ThetaData(k, i) : fill[i];
  }
  return theta;
}

struct PointGrads {
  double d_mu = 0.0;
  double d_rho = 0.0;
};

// NLL and interval-score contributions of one (sample, output) cell, with
// gradients w.r.t. the predicted mean and log-std. `w` carries the per-source
// normalization; `beta_is` scales the interval-score gradient only.
inline PointGrads accumulate_cell(double y, double mu, double rho, double sigma, double phi,
                                  double w, double beta_is, double* nll_out, double* is_out) {
  const double r = y - mu;
  const double inv_var = std::exp(-2.0 * rho);
  *nll_out += w * (kHalfLog2Pi + rho + 0.5 * r * r * inv_var);

  const double l = mu - kIntervalZ * sigma;
  const double u = mu + kIntervalZ * sigma;
  double is_v = u - l;
  double d_is_dmu = 0.0;
  double d_is_dsigma = 2.0 * kIntervalZ;
  if (y < l) {
    is_v += (2.0 / phi) * (l - y);
    d_is_dmu += 2.0 / phi;
    d_is_dsigma -= (2.0 / phi) * kIntervalZ;
  }
  if (y > u) {
    is_v += (2.0 / phi) * (y - u);
    d_is_dmu -= 2.0 / phi;
    d_is_dsigma -= (2.0 / phi) * kIntervalZ;
  }
  *is_out += w * is_v;

  PointGrads g;
  g.d_mu = w * (-r * inv_var) + beta_is * w * d_is_dmu;
  g.d_rho = w * (1.0 - r * r * inv_var) + beta_is * w * (d_is_dsigma * sigma);
  return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Emulation loss: every source predicts its own targets with its own masked
// calibration inputs, normalized per source so data imbalance cannot drown a
// source out. Gradients never reach the calibration posteriors here: absent
// slots are filled with detached estimate values and the theta-input gradient
// is dropped.
inline std::pair<double, double> emulation_loss(Network& net, const BatchView& b,
                                                const Eigen::VectorXd& fill, const LossConfig& cfg,
                                                bool backward, LossReport* report) {
  require(b.n_rows() > 0, Error::Kind::Contract, "emulation_loss: empty batch");
  const int ny = net.config().y_dim;
  const Eigen::MatrixXd theta_in = detail::emulation_theta(net, b, fill);
  ForwardCache fc;
  net.forward_batch(b.S, theta_in, b.Cat, b.X, fc);

  Eigen::MatrixXd d_mu = Eigen::MatrixXd::Zero(b.n_rows(), ny);
  Eigen::MatrixXd d_rho = Eigen::MatrixXd::Zero(b.n_rows(), ny);
  double nll_total = 0.0, is_total = 0.0;
  for (int k = 0; k < b.n_rows(); ++k) {
    const int j = b.source_of_row[static_cast<std::size_t>(k)];
    const double w = 1.0 / static_cast<double>(b.rows_per_source[static_cast<std::size_t>(j)]);
    for (int i = 0; i < ny; ++i) {
      double nll_cell = 0.0, is_cell = 0.0;
      const auto g = detail::accumulate_cell(b.Y(k, i), fc.mu(k, i), fc.rho(k, i), fc.sigma(k, i),
                                             cfg.phi, w, cfg.beta_is, &nll_cell, &is_cell);
      nll_total += nll_cell;
      is_total += is_cell;
      if (report) {
        report->nll_em_parts[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] += nll_cell;
        report->is_em_parts[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] += is_cell;
      }
      d_mu(k, i) = g.d_mu;
      d_rho(k, i) = g.d_rho;
    }
  }
  if (backward) net.backward_batch(fc, d_mu, d_rho);  // theta-input gradient dropped
  return {nll_total, is_total};
}

// ---------------------------------------------------------------------------
// Calibration loss: each low-fidelity source, evaluated at its sampled
// estimates on the high-fidelity input locations, is scored against the
// high-fidelity targets. Gradients flow into the posteriors through the
// reparameterized draw.
inline std::pair<double, double> calibration_loss(Network& net, const BatchView& b,
                                                  const std::vector<ClampedSample>& draws,
                                                  const LossConfig& cfg, bool backward,
                                                  LossReport* report) {
  auto& calib = net.calib();
  if (calib.empty()) return {0.0, 0.0};
  require(!b.hf_rows.empty(), Error::Kind::Contract,
          "calibration_loss: batch contains no high-fidelity records");
  require(draws.size() == calib.size(), Error::Kind::Contract,
          "calibration_loss: one draw per low-fidelity source required");

  const int ny = net.config().y_dim;
  const int n0 = static_cast<int>(b.hf_rows.size());
  const int ds = net.config().n_sources;

  Eigen::MatrixXd x_hf(n0, net.config().x_dim);
  Eigen::MatrixXd cat_hf(n0, b.Cat.cols());
  Eigen::MatrixXd y_hf(n0, ny);
  for (int k = 0; k < n0; ++k) {
    const int row = b.hf_rows[static_cast<std::size_t>(k)];
    x_hf.row(k) = b.X.row(row);
    if (b.Cat.cols() > 0) cat_hf.row(k) = b.Cat.row(row);
    y_hf.row(k) = b.Y.row(row);
  }

  double nll_total = 0.0, is_total = 0.0;
  const double w = 1.0 / static_cast<double>(n0);
  for (std::size_t c = 0; c < calib.size(); ++c) {
    auto& cs = calib[c];
    const auto& draw = draws[c];
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n0, ds);
    S.col(cs.source_id).setOnes();
    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(n0, net.config().theta_dim);
    for (int p = 0; p < cs.n_params(); ++p)
      theta.col(cs.slots[static_cast<std::size_t>(p)]).setConstant(draw.theta[p]);

    ForwardCache fc;
    net.forward_batch(S, theta, cat_hf, x_hf, fc);

    Eigen::MatrixXd d_mu = Eigen::MatrixXd::Zero(n0, ny);
    Eigen::MatrixXd d_rho = Eigen::MatrixXd::Zero(n0, ny);
    for (int k = 0; k < n0; ++k) {
      for (int i = 0; i < ny; ++i) {
        double nll_cell = 0.0, is_cell = 0.0;
        const auto g = detail::accumulate_cell(y_hf(k, i), fc.mu(k, i), fc.rho(k, i), fc.sigma(k, i),
                                               cfg.phi, w, cfg.beta_is, &nll_cell, &is_cell);
        nll_total += nll_cell;
        is_total += is_cell;
        if (report) {
          report->nll_cal_parts[static_cast<std::size_t>(cs.source_id)][static_cast<std::size_t>(i)] += nll_cell;
          report->is_cal_parts[static_cast<std::size_t>(cs.source_id)][static_cast<std::size_t>(i)] += is_cell;
        }
        d_mu(k, i) = g.d_mu;
        d_rho(k, i) = g.d_rho;
      }
    }
    if (backward) {
      const Eigen::MatrixXd d_theta = net.backward_batch(fc, d_mu, d_rho);
      for (int p = 0; p < cs.n_params(); ++p) {
        if (cs.frozen[static_cast<std::size_t>(p)]) continue;
        const double g_slot = d_theta.col(cs.slots[static_cast<std::size_t>(p)]).sum();
        cs.g_mu[p] += g_slot * draw.dtheta_dmu[p];
        cs.g_log_sigma[p] += g_slot * draw.dtheta_dlogsig[p];
      }
    }
  }
  return {nll_total, is_total};
}

// ---------------------------------------------------------------------------
// Full objective. One reparameterized draw per low-fidelity source per
// evaluation; the same draw feeds the calibration terms (with gradients) and
// the emulation fill (detached).
inline LossReport total_loss(Network& net, const BatchView& b, const LossConfig& cfg,
                             const std::vector<Eigen::VectorXd>& eps, bool backward) {
  cfg.validate();
  auto& calib = net.calib();
  require(eps.size() == calib.size(), Error::Kind::Contract,
          "total_loss: one eps vector per low-fidelity source required");

  LossReport report;
  report.init_parts(net.config().n_sources, net.config().y_dim);

  std::vector<ClampedSample> draws;
  draws.reserve(calib.size());
  for (std::size_t c = 0; c < calib.size(); ++c)
    draws.push_back(net.sample_theta(calib[c].source_id, eps[c]));

  Eigen::VectorXd fill = Eigen::VectorXd::Zero(net.config().theta_dim);
  std::vector<std::uint8_t> filled(static_cast<std::size_t>(net.config().theta_dim), 0);
  for (std::size_t c = 0; c < calib.size(); ++c) {
    for (int p = 0; p < calib[c].n_params(); ++p) {
      const int slot = calib[c].slots[static_cast<std::size_t>(p)];
      if (filled[static_cast<std::size_t>(slot)]) continue;  // shared slot: first owner wins
      fill[slot] = draws[c].theta[p];
      filled[static_cast<std::size_t>(slot)] = 1;
    }
  }

  auto [nll_em, is_em] = emulation_loss(net, b, fill, cfg, backward, &report);
  report.nll_em = nll_em;
  report.is_em = is_em;

  if (!calib.empty() && net.config().n_sources >= 2) {
    auto [nll_cal, is_cal] = calibration_loss(net, b, draws, cfg, backward, &report);
    report.nll_cal = nll_cal;
    report.is_cal = is_cal;
  }

  // Robust log-sigma form of the divergence: diverging posteriors evaluate to
  // inf here so the trainer can abort with a term diagnostic instead of
  // tripping the kl_term contract.
  report.kl = 0.0;
  for (const auto& cs : calib) {
    double part = 0.0;
    for (int p = 0; p < cs.n_params(); ++p)
      part += cs.log_sigma[p] - std::log(cfg.sigma_p) +
              0.5 * cfg.sigma_p * std::exp(-cs.log_sigma[p]) - 0.5;
    report.kl_parts[static_cast<std::size_t>(cs.source_id)] = part;
    report.kl += part;
  }
  if (backward) {
    for (auto& cs : calib) {
      for (int p = 0; p < cs.n_params(); ++p) {
        if (cs.frozen[static_cast<std::size_t>(p)]) continue;
        cs.g_log_sigma[p] += cfg.beta_kl * (1.0 - 0.5 * cfg.sigma_p * std::exp(-cs.log_sigma[p]));
      }
    }
  }

  report.total = report.nll_em + report.nll_cal + cfg.beta_is * (report.is_em + report.is_cal) +
                 cfg.beta_kl * report.kl;
  return report;
}

}  // namespace procal
