#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "procal/dataset.hpp"

namespace procal {

// Three-source analytic benchmark. One numeric input, three outputs. Source
// s0 is the noisy high-fidelity truth, s1 is a two-parameter model with
// model-form error, s2 is a one-parameter model that matches s0 exactly at
// theta = -0.5. Low-fidelity data are noise-free.
struct AnalyticConfig {
  double x_lo = -1.0, x_hi = 2.2;
  double theta_lo = -1.0, theta_hi = 2.2;
  std::array<double, 3> noise_var{0.025, 0.00005, 0.02};
  std::vector<std::string> sources{"s0", "s1", "s2"};
  std::vector<int> n_train{40, 200, 100};  // aligned with `sources`
  double val_ratio = 0.25;                 // validation rows per training row
  int n_test = 1000;
  std::uint64_t seed = 1;
  int max_retries = 100;

  nlohmann::json to_json() const {
    return {{"x_range", {x_lo, x_hi}},
            {"theta_range", {theta_lo, theta_hi}},
            {"noise_var", noise_var},
            {"sources", sources},
            {"n_train", n_train},
            {"val_ratio", val_ratio},
            {"n_test", n_test},
            {"seed", seed}};
  }

  static AnalyticConfig from_json(const nlohmann::json& j) {
    AnalyticConfig c;
    if (j.contains("x_range")) { c.x_lo = j.at("x_range").at(0); c.x_hi = j.at("x_range").at(1); }
    if (j.contains("theta_range")) { c.theta_lo = j.at("theta_range").at(0); c.theta_hi = j.at("theta_range").at(1); }
    if (j.contains("noise_var")) c.noise_var = j.at("noise_var").get<std::array<double, 3>>();
    if (j.contains("sources")) c.sources = j.at("sources").get<std::vector<std::string>>();
    if (j.contains("n_train")) c.n_train = j.at("n_train").get<std::vector<int>>();
    if (j.contains("val_ratio")) c.val_ratio = j.at("val_ratio").get<double>();
    if (j.contains("n_test")) c.n_test = j.at("n_test").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  }
};

inline int analytic_source_index(const std::string& name) {
  if (name == "s0") return 0;
  if (name == "s1") return 1;
  if (name == "s2") return 2;
  fail(Error::Kind::Config, "unknown analytic source: " + name);
}

inline int analytic_theta_arity(int source_index) {
  switch (source_index) {
    case 0: return 0;
    case 1: return 2;
    case 2: return 1;
    default: fail(Error::Kind::Contract, "analytic source index out of range");
  }
}

inline std::vector<std::string> analytic_param_names(const std::string& source_name) {
  if (source_name == "s0") return {};
  if (source_name == "s1") return {"theta1_s1", "theta2_s1"};
  if (source_name == "s2") return {"theta1_s2"};
  fail(Error::Kind::Config, "unknown analytic source: " + source_name);
}

// Noise-free evaluation; returns false when a log argument is nonpositive.
// s0 is evaluated through the s2 form at theta = -0.5 so the two agree
// term-for-term in floating point.
inline bool try_eval_source(int source_index, double x, const Eigen::VectorXd& theta,
                            Eigen::Vector3d& out) noexcept {
  const double x2 = x * x;
  const double x3 = x2 * x;
  if (source_index == 0 || source_index == 2) {
    const double t = source_index == 0 ? -0.5 : theta[0];
    const double arg = t * x3 + 2.0 * x2 + 2.0 * x + 11.0;
    if (!(arg > 0.0)) return false;
    out[0] = t * x3 - 2.0 * x2 + x + 1.0;
    out[1] = std::log(arg);
    out[2] = t * x3 + 2.0 * (x - 0.5) * (x - 0.5) - 2.0;
    return true;
  }
  const double t1 = theta[0];
  const double t2 = theta[1];
  const double arg = t1 * x3 + t2 * x2 + 2.0 * x + 11.0;
  if (!(arg > 0.0)) return false;
  out[0] = t1 * x3 - t2 * x2 + 2.0;
  out[1] = std::log(arg);
  out[2] = t1 * x3 + t2 * std::cosh(x - 0.3) - 3.5;
  return true;
}

inline Eigen::Vector3d eval_source(int source_index, double x, const Eigen::VectorXd& theta) {
  require(source_index >= 0 && source_index <= 2, Error::Kind::Contract,
          "analytic source index out of range");
  require(theta.size() == analytic_theta_arity(source_index), Error::Kind::Contract,
          "theta arity mismatch for analytic source s" + std::to_string(source_index));
  Eigen::Vector3d out;
  if (!try_eval_source(source_index, x, theta, out)) {
    std::ostringstream ss;
    ss << "domain error: nonpositive log argument for source s" << source_index << " at x=" << x
       << " theta=[";
    for (Eigen::Index i = 0; i < theta.size(); ++i) ss << (i ? "," : "") << theta[i];
    ss << "]";
    fail(Error::Kind::Numeric, ss.str());
  }
  return out;
}

inline DatasetSchema analytic_schema(const AnalyticConfig& cfg) {
  require(!cfg.sources.empty() && cfg.sources.front() == "s0", Error::Kind::Config,
          "analytic source list must start with s0");
  DatasetSchema schema;
  schema.x_dim = 1;
  schema.y_dim = 3;
  int id = 0;
  for (const auto& name : cfg.sources) {
    SourceSpec spec;
    spec.source_id = id++;
    spec.name = name;
    spec.is_hf = (name == "s0");
    spec.calib_param_names = analytic_param_names(name);
    for (const auto& p : spec.calib_param_names) schema.theta_union.push_back(p);
    schema.sources.push_back(std::move(spec));
  }
  schema.validate();
  return schema;
}

inline CalibDomain analytic_domain(const AnalyticConfig& cfg, const DatasetSchema& schema) {
  CalibDomain d;
  d.names = schema.theta_union;
  d.lower = Eigen::VectorXd::Constant(schema.theta_dim(), cfg.theta_lo);
  d.upper = Eigen::VectorXd::Constant(schema.theta_dim(), cfg.theta_hi);
  if (schema.theta_dim() > 0) d.validate();
  return d;
}

// Draws `counts[k]` records for the k-th configured source. Inputs and
// calibration parameters are i.i.d. uniform on their ranges; records hitting
// a log-domain violation are rejection-resampled from the same per-record
// substream. Only high-fidelity outputs receive noise; drawn after the
// accept so rejections do not shift the noise stream.
inline MultiSourceDataset generate(const AnalyticConfig& cfg, const std::vector<int>& counts,
                                   std::uint64_t seed, bool with_noise = true) {
  const DatasetSchema schema = analytic_schema(cfg);
  require(counts.size() == cfg.sources.size(), Error::Kind::Config,
          "sample counts must align with the analytic source list");
  MultiSourceDataset ds;
  ds.schema = schema;
  ds.domain = analytic_domain(cfg, schema);

  for (std::size_t k = 0; k < cfg.sources.size(); ++k) {
    const std::string& name = cfg.sources[k];
    const int bench = analytic_source_index(name);
    const int arity = analytic_theta_arity(bench);
    const auto slots = schema.owned_slots(static_cast<int>(k));
    for (int i = 0; i < counts[k]; ++i) {
      auto rng = substream(seed, "data/" + name + "/" + std::to_string(i));
      std::uniform_real_distribution<double> ux(cfg.x_lo, cfg.x_hi);
      std::uniform_real_distribution<double> ut(cfg.theta_lo, cfg.theta_hi);

      Record r;
      r.source_id = static_cast<int>(k);
      r.x.resize(1);
      r.theta = Eigen::VectorXd::Zero(schema.theta_dim());
      r.theta_present.assign(static_cast<std::size_t>(schema.theta_dim()), 0);

      Eigen::VectorXd th(arity);
      Eigen::Vector3d y;
      bool ok = false;
      for (int attempt = 0; attempt < cfg.max_retries && !ok; ++attempt) {
        r.x[0] = ux(rng);
        for (int a = 0; a < arity; ++a) th[a] = ut(rng);
        ok = try_eval_source(bench, r.x[0], th, y);
      }
      require(ok, Error::Kind::Data,
              "generation error: retry budget exhausted for source " + name);
      for (int a = 0; a < arity; ++a) {
        r.theta[slots[static_cast<std::size_t>(a)]] = th[a];
        r.theta_present[static_cast<std::size_t>(slots[static_cast<std::size_t>(a)])] = 1;
      }
      r.y = y;
      if (bench == 0 && with_noise) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (int o = 0; o < 3; ++o) r.y[o] += std::sqrt(cfg.noise_var[static_cast<std::size_t>(o)]) * gauss(rng);
      }
      ds.records.push_back(std::move(r));
    }
  }
  ds.refresh_counts();
  return ds;
}

inline MultiSourceDataset generate(const AnalyticConfig& cfg) {
  return generate(cfg, cfg.n_train, cfg.seed);
}

enum class GridMode { Random, Linspace };

inline std::vector<double> test_grid(int n, GridMode mode = GridMode::Random,
                                     std::uint64_t seed = 1, double lo = -1.0, double hi = 2.2) {
  require(n >= 2, Error::Kind::Contract, "test_grid requires n >= 2");
  std::vector<double> xs(static_cast<std::size_t>(n));
  if (mode == GridMode::Linspace) {
    for (int i = 0; i < n; ++i)
      xs[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
  } else {
    auto rng = substream(seed, "test_grid");
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& x : xs) x = u(rng);
  }
  return xs;
}

struct AnalyticBundle {
  MultiSourceDataset train;
  MultiSourceDataset val;
  MultiSourceDataset test;
};

// Full experimental protocol: per source, n_train rows plus val_ratio extra
// for validation; a separate test set with noise-free targets used as truth.
inline AnalyticBundle generate_study(const AnalyticConfig& cfg) {
  require(cfg.n_train.size() == cfg.sources.size(), Error::Kind::Config,
          "n_train must align with the analytic source list");
  std::vector<int> gen_counts;
  for (int n : cfg.n_train)
    gen_counts.push_back(static_cast<int>(std::llround(n * (1.0 + cfg.val_ratio))));
  AnalyticBundle b;
  const MultiSourceDataset full = generate(cfg, gen_counts, cfg.seed);
  const double val_share = cfg.val_ratio / (1.0 + cfg.val_ratio);
  auto [train, val] = split_train_val(full, val_share, cfg.seed);
  b.train = std::move(train);
  b.val = std::move(val);

  std::vector<int> test_counts(cfg.sources.size(), cfg.n_test);
  b.test = generate(cfg, test_counts, cfg.seed ^ 0x7e57da7aull, /*with_noise=*/false);
  return b;
}

}  // namespace procal
