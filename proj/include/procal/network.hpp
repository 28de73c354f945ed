#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "procal/dataset.hpp"
#include "procal/mlp.hpp"

namespace procal {

struct NetworkConfig {
  int latent_dim = 2;
  std::vector<int> embed_hidden{5};        // blocks 0, 1, 2
  std::vector<int> head_hidden{16, 32, 16, 8};
  double sigma_init_fraction = 0.25;       // initial posterior std / domain width

  // Resolved from the dataset schema at init time.
  int n_sources = 0;
  int x_dim = 0;
  int y_dim = 0;
  int theta_dim = 0;
  std::vector<int> cat_cards;

  int cat_onehot_dim() const {
    int total = 0;
    for (int c : cat_cards) total += c;
    return total;
  }
  bool has_categoricals() const { return cat_onehot_dim() > 0; }

  nlohmann::json to_json() const {
    return {{"latent_dim", latent_dim},
            {"embed_hidden", embed_hidden},
            {"head_hidden", head_hidden},
            {"sigma_init_fraction", sigma_init_fraction},
            {"n_sources", n_sources},
            {"x_dim", x_dim},
            {"y_dim", y_dim},
            {"theta_dim", theta_dim},
            {"cat_cards", cat_cards}};
  }

  static NetworkConfig from_json(const nlohmann::json& j) {
    NetworkConfig c;
    if (j.contains("latent_dim")) c.latent_dim = j.at("latent_dim").get<int>();
    if (j.contains("embed_hidden")) c.embed_hidden = j.at("embed_hidden").get<std::vector<int>>();
    if (j.contains("head_hidden")) c.head_hidden = j.at("head_hidden").get<std::vector<int>>();
    if (j.contains("sigma_init_fraction")) c.sigma_init_fraction = j.at("sigma_init_fraction").get<double>();
    if (j.contains("n_sources")) c.n_sources = j.at("n_sources").get<int>();
    if (j.contains("x_dim")) c.x_dim = j.at("x_dim").get<int>();
    if (j.contains("y_dim")) c.y_dim = j.at("y_dim").get<int>();
    if (j.contains("theta_dim")) c.theta_dim = j.at("theta_dim").get<int>();
    if (j.contains("cat_cards")) c.cat_cards = j.at("cat_cards").get<std::vector<int>>();
    return c;
  }
};

// Variational posterior of one low-fidelity source: an unconstrained mean and
// a log standard deviation per owned calibration parameter, in standardized
// coordinates. Samples are clamped into the training domain by a scaled tanh.
struct CalibSource {
  int source_id = 0;
  std::vector<std::string> names;
  std::vector<int> slots;          // indices into the global union
  Eigen::VectorXd mu_raw;
  Eigen::VectorXd log_sigma;
  Eigen::VectorXd g_mu;
  Eigen::VectorXd g_log_sigma;
  std::vector<std::uint8_t> frozen;

  int n_params() const { return static_cast<int>(slots.size()); }
};

struct ClampedSample {
  Eigen::VectorXd theta;          // standardized, strictly inside the domain
  Eigen::VectorXd dtheta_dmu;
  Eigen::VectorXd dtheta_dlogsig;
};

struct PredictiveDistribution {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
};

struct ForwardCache {
  MlpCache source_c, calib_c, cat_c, head_c;
  Eigen::MatrixXd mu, rho, sigma;
  int n = 0;
};

struct ParamBlock {
  double* value = nullptr;
  double* grad = nullptr;
  Eigen::Index size = 0;
  bool decay = true;                       // decoupled weight decay applies
  const std::uint8_t* frozen = nullptr;    // per-element, calibration only
};

// The multi-block architecture. Block 0 embeds the one-hot source indicator,
// Block 1 maps [z_s, masked theta] to the calibration latent, Block 2 embeds
// one-hot categorical variables when present, and the head consumes
// [x, z_theta, z_c] to produce a mean and a log-std per output.
class Network {
 public:
  Network() = default;

  void init(const NetworkConfig& cfg_in, const MultiSourceDataset& train_std, std::uint64_t seed) {
    require(train_std.standardized, Error::Kind::Contract, "network init expects standardized data");
    cfg = cfg_in;
    cfg.n_sources = train_std.schema.n_sources();
    cfg.x_dim = train_std.schema.x_dim;
    cfg.y_dim = train_std.schema.y_dim;
    cfg.theta_dim = train_std.schema.theta_dim();
    cfg.cat_cards = train_std.schema.cat_cards;

    source_names_.clear();
    is_hf_.clear();
    owned_.clear();
    for (const auto& s : train_std.schema.sources) {
      source_names_.push_back(s.name);
      is_hf_.push_back(s.is_hf ? 1 : 0);
      owned_.push_back(train_std.schema.owned_slots(s.source_id));
    }
    theta_names_ = train_std.schema.theta_union;

    configure_blocks();
    auto rng0 = substream(seed, "init/source_embed");
    source_embed.init_params(rng0);
    auto rng1 = substream(seed, "init/calib_embed");
    calib_embed.init_params(rng1);
    if (cfg.has_categoricals()) {
      auto rng2 = substream(seed, "init/cat_embed");
      cat_embed.init_params(rng2);
    }
    auto rng3 = substream(seed, "init/head");
    head.init_params(rng3);

    // Standardized clamp bounds.
    lb_std_.resize(cfg.theta_dim);
    ub_std_.resize(cfg.theta_dim);
    for (int i = 0; i < cfg.theta_dim; ++i) {
      lb_std_[i] = train_std.scaler.theta[static_cast<std::size_t>(i)].transform(train_std.domain.lower[i]);
      ub_std_[i] = train_std.scaler.theta[static_cast<std::size_t>(i)].transform(train_std.domain.upper[i]);
      require(lb_std_[i] < ub_std_[i], Error::Kind::Config, "empty standardized calibration domain");
    }

    // Posterior means start at each source's sample mean of the parameter;
    // stds start at a fixed fraction of the domain width.
    calib_.clear();
    for (const auto& s : train_std.schema.sources) {
      if (s.is_hf || s.calib_param_names.empty()) continue;
      CalibSource cs;
      cs.source_id = s.source_id;
      cs.names = s.calib_param_names;
      cs.slots = train_std.schema.owned_slots(s.source_id);
      const int k = cs.n_params();
      cs.mu_raw.resize(k);
      cs.log_sigma.resize(k);
      cs.g_mu = Eigen::VectorXd::Zero(k);
      cs.g_log_sigma = Eigen::VectorXd::Zero(k);
      cs.frozen.assign(static_cast<std::size_t>(k), 0);
      for (int p = 0; p < k; ++p) {
        const int slot = cs.slots[static_cast<std::size_t>(p)];
        double sum = 0.0;
        int count = 0;
        for (const auto& r : train_std.records) {
          if (r.source_id != s.source_id) continue;
          require(r.theta_present[static_cast<std::size_t>(slot)] != 0, Error::Kind::Data,
                  "record of source " + s.name + " missing owned parameter");
          sum += r.theta[slot];
          ++count;
        }
        require(count > 0, Error::Kind::Data, "no records for source " + s.name);
        cs.mu_raw[p] = clamp_inverse(slot, sum / count);
        cs.log_sigma[p] = std::log(cfg.sigma_init_fraction * (ub_std_[slot] - lb_std_[slot]));
      }
      calib_.push_back(std::move(cs));
    }
  }

  const NetworkConfig& config() const { return cfg; }
  const std::vector<CalibSource>& calib() const { return calib_; }
  std::vector<CalibSource>& calib() { return calib_; }
  const std::vector<std::string>& theta_names() const { return theta_names_; }
  const std::vector<std::string>& source_names() const { return source_names_; }
  bool is_hf(int source_id) const { return is_hf_.at(static_cast<std::size_t>(source_id)) != 0; }
  const std::vector<int>& owned_slots(int source_id) const { return owned_.at(static_cast<std::size_t>(source_id)); }
  double lb_std(int slot) const { return lb_std_[slot]; }
  double ub_std(int slot) const { return ub_std_[slot]; }

  CalibSource* find_calib(int source_id) {
    for (auto& c : calib_)
      if (c.source_id == source_id) return &c;
    return nullptr;
  }
  const CalibSource* find_calib(int source_id) const {
    for (const auto& c : calib_)
      if (c.source_id == source_id) return &c;
    return nullptr;
  }

  // ---- clamping ----------------------------------------------------------

  double clamp_value(int slot, double u) const {
    const double lb = lb_std_[slot], ub = ub_std_[slot];
    const double t = std::tanh(u);
    double v = lb + 0.5 * (ub - lb) * (t + 1.0);
    // tanh saturates to exactly +-1 in floating point; keep samples strictly
    // interior as the contract promises.
    const double pad = 1e-12 * (ub - lb);
    return std::min(std::max(v, lb + pad), ub - pad);
  }

  double clamp_derivative(int slot, double u) const {
    const double t = std::tanh(u);
    return 0.5 * (ub_std_[slot] - lb_std_[slot]) * (1.0 - t * t);
  }

  double clamp_inverse(int slot, double value_std) const {
    const double lb = lb_std_[slot], ub = ub_std_[slot];
    const double pad = 1e-9 * (ub - lb);
    const double v = std::min(std::max(value_std, lb + pad), ub - pad);
    return std::atanh(2.0 * (v - lb) / (ub - lb) - 1.0);
  }

  // Reparameterized draw for one low-fidelity source. Frozen entries ignore
  // the noise so the estimate stays pinned at clamp(mu).
  ClampedSample sample_theta(int source_id, const Eigen::VectorXd& eps) const {
    const CalibSource* cs = find_calib(source_id);
    require(cs != nullptr, Error::Kind::Contract,
            "sample_theta: source " + std::to_string(source_id) + " has no calibration parameters");
    require(eps.size() == cs->n_params(), Error::Kind::Contract, "sample_theta: eps arity mismatch");
    ClampedSample out;
    out.theta.resize(cs->n_params());
    out.dtheta_dmu.resize(cs->n_params());
    out.dtheta_dlogsig.resize(cs->n_params());
    for (int p = 0; p < cs->n_params(); ++p) {
      const int slot = cs->slots[static_cast<std::size_t>(p)];
      const double sigma = std::exp(cs->log_sigma[p]);
      const double e = cs->frozen[static_cast<std::size_t>(p)] ? 0.0 : eps[p];
      const double u = cs->mu_raw[p] + sigma * e;
      out.theta[p] = clamp_value(slot, u);
      const double du = clamp_derivative(slot, u);
      out.dtheta_dmu[p] = du;
      out.dtheta_dlogsig[p] = du * sigma * e;
    }
    return out;
  }

  // ---- forward / backward -------------------------------------------------

  void forward_batch(const Eigen::MatrixXd& S, const Eigen::MatrixXd& Theta,
                     const Eigen::MatrixXd& Cat, const Eigen::MatrixXd& X,
                     ForwardCache& fc) const {
    const Eigen::Index n = X.rows();
    fc.n = static_cast<int>(n);
    const Eigen::MatrixXd Zs = source_embed.forward(S, &fc.source_c);
    Eigen::MatrixXd U1(n, cfg.latent_dim + cfg.theta_dim);
    U1 << Zs, Theta;
    const Eigen::MatrixXd Zth = calib_embed.forward(U1, &fc.calib_c);

    Eigen::MatrixXd U3;
    if (cfg.has_categoricals()) {
      const Eigen::MatrixXd Zc = cat_embed.forward(Cat, &fc.cat_c);
      U3.resize(n, cfg.x_dim + 2 * cfg.latent_dim);
      U3 << X, Zth, Zc;
    } else {
      U3.resize(n, cfg.x_dim + cfg.latent_dim);
      U3 << X, Zth;
    }
    const Eigen::MatrixXd H = head.forward(U3, &fc.head_c);
    fc.mu = H.leftCols(cfg.y_dim);
    fc.rho = H.rightCols(cfg.y_dim);
    fc.sigma = fc.rho.array().exp().matrix();
  }

  // Returns the gradient w.r.t. the theta input so callers can route it into
  // the calibration posteriors (calibration task) or drop it (emulation).
  Eigen::MatrixXd backward_batch(const ForwardCache& fc, const Eigen::MatrixXd& d_mu,
                                 const Eigen::MatrixXd& d_rho) {
    Eigen::MatrixXd dH(fc.mu.rows(), 2 * cfg.y_dim);
    dH << d_mu, d_rho;
    const Eigen::MatrixXd dU3 = head.backward(fc.head_c, dH);
    const Eigen::MatrixXd dZth = dU3.middleCols(cfg.x_dim, cfg.latent_dim);
    if (cfg.has_categoricals()) {
      const Eigen::MatrixXd dZc = dU3.rightCols(cfg.latent_dim);
      cat_embed.backward(fc.cat_c, dZc);
    }
    const Eigen::MatrixXd dU1 = calib_embed.backward(fc.calib_c, dZth);
    const Eigen::MatrixXd dZs = dU1.leftCols(cfg.latent_dim);
    source_embed.backward(fc.source_c, dZs);
    return dU1.rightCols(cfg.theta_dim);
  }

  // ---- single-record convenience ------------------------------------------

  Eigen::VectorXd encode_source(int t_s) const {
    require(t_s >= 0 && t_s < cfg.n_sources, Error::Kind::Contract, "source index out of range");
    MlpCache c;
    return source_embed.forward(one_hot(t_s, cfg.n_sources).transpose(), &c).row(0);
  }

  Eigen::VectorXd encode_calibration(const Eigen::VectorXd& z_s, const Eigen::VectorXd& theta_masked) const {
    require(z_s.size() == cfg.latent_dim && theta_masked.size() == cfg.theta_dim,
            Error::Kind::Contract, "encode_calibration: shape mismatch");
    Eigen::MatrixXd u(1, cfg.latent_dim + cfg.theta_dim);
    u << z_s.transpose(), theta_masked.transpose();
    MlpCache c;
    return calib_embed.forward(u, &c).row(0);
  }

  Eigen::VectorXd encode_categorical(const std::vector<int>& levels) const {
    require(cfg.has_categoricals(), Error::Kind::Contract, "network has no categorical block");
    MlpCache c;
    return cat_embed.forward(cat_onehot_row(levels), &c).row(0);
  }

  Eigen::MatrixXd cat_onehot_row(const std::vector<int>& levels) const {
    require(static_cast<int>(levels.size()) == static_cast<int>(cfg.cat_cards.size()),
            Error::Kind::Contract, "categorical arity mismatch");
    Eigen::MatrixXd row(1, cfg.cat_onehot_dim());
    int at = 0;
    for (std::size_t i = 0; i < levels.size(); ++i) {
      row.block(0, at, 1, cfg.cat_cards[i]) = one_hot(levels[i], cfg.cat_cards[i]).transpose();
      at += cfg.cat_cards[i];
    }
    return row;
  }

  // Masking rule shared with the dataset module: owned entries keep data
  // values, everything else takes the fill; high-fidelity rows are zeroed.
  Eigen::VectorXd mask_input(int source_id, const Eigen::VectorXd& theta,
                             const std::vector<std::uint8_t>& present,
                             const Eigen::VectorXd& fill) const {
    require(theta.size() == cfg.theta_dim && fill.size() == cfg.theta_dim, Error::Kind::Contract,
            "mask_input: shape mismatch");
    if (is_hf(source_id)) return Eigen::VectorXd::Zero(cfg.theta_dim);
    std::vector<std::uint8_t> owned(static_cast<std::size_t>(cfg.theta_dim), 0);
    for (int slot : owned_slots(source_id)) owned[static_cast<std::size_t>(slot)] = 1;
    Eigen::VectorXd out(cfg.theta_dim);
    for (int i = 0; i < cfg.theta_dim; ++i) {
      const bool keep = owned[static_cast<std::size_t>(i)] && present[static_cast<std::size_t>(i)];
      out[i] = keep ? theta[i] : fill[i];
    }
    return out;
  }

  PredictiveDistribution predict(int t_s, const Eigen::VectorXd& x, const std::vector<int>& cat,
                                 const Eigen::VectorXd& theta_input) const {
    Eigen::MatrixXd S = one_hot(t_s, cfg.n_sources).transpose();
    Eigen::MatrixXd X = x.transpose();
    Eigen::MatrixXd Theta = theta_input.transpose();
    Eigen::MatrixXd Cat = cfg.has_categoricals() ? cat_onehot_row(cat) : Eigen::MatrixXd(1, 0);
    ForwardCache fc;
    forward_batch(S, Theta, Cat, X, fc);
    PredictiveDistribution out{fc.mu.row(0), fc.sigma.row(0)};
    for (Eigen::Index i = 0; i < out.stddev.size(); ++i)
      require(std::isfinite(out.mean[i]) && std::isfinite(out.stddev[i]) && out.stddev[i] > 0.0,
              Error::Kind::Numeric, "predictive distribution is not finite/positive");
    return out;
  }

  // Emulation mode: the record's own masked calibration inputs.
  PredictiveDistribution predict_emulation(const Record& r,
                                           const Eigen::VectorXd& fill) const {
    return predict(r.source_id, r.x, r.cat, mask_input(r.source_id, r.theta, r.theta_present, fill));
  }
  PredictiveDistribution predict_emulation(const Record& r) const {
    return predict_emulation(r, Eigen::VectorXd::Zero(cfg.theta_dim));
  }

  // Calibration mode: a low-fidelity source evaluated with estimated
  // parameters at an arbitrary input location.
  PredictiveDistribution predict_calibration(int t_s, const Eigen::VectorXd& x,
                                             const std::vector<int>& cat,
                                             const Eigen::VectorXd& theta_hat_owned) const {
    require(!is_hf(t_s), Error::Kind::Contract,
            "calibration mode is undefined for the high-fidelity source");
    const CalibSource* cs = find_calib(t_s);
    require(cs != nullptr && theta_hat_owned.size() == cs->n_params(), Error::Kind::Contract,
            "predict_calibration: estimate arity mismatch");
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(cfg.theta_dim);
    for (int p = 0; p < cs->n_params(); ++p) theta[cs->slots[static_cast<std::size_t>(p)]] = theta_hat_owned[p];
    return predict(t_s, x, cat, theta);
  }

  // ---- parameters ----------------------------------------------------------

  std::vector<ParamBlock> param_blocks() {
    std::vector<ParamBlock> blocks;
    auto add_mlp = [&blocks](Mlp& m) {
      for (auto& l : m.layers()) {
        blocks.push_back({l.W.data(), l.gW.data(), l.W.size(), true, nullptr});
        blocks.push_back({l.b.data(), l.gb.data(), l.b.size(), true, nullptr});
      }
    };
    add_mlp(source_embed);
    add_mlp(calib_embed);
    if (cfg.has_categoricals()) add_mlp(cat_embed);
    add_mlp(head);
    for (auto& c : calib_) {
      blocks.push_back({c.mu_raw.data(), c.g_mu.data(), c.mu_raw.size(), false, c.frozen.data()});
      blocks.push_back({c.log_sigma.data(), c.g_log_sigma.data(), c.log_sigma.size(), false, c.frozen.data()});
    }
    return blocks;
  }

  void zero_grad() {
    source_embed.zero_grad();
    calib_embed.zero_grad();
    if (cfg.has_categoricals()) cat_embed.zero_grad();
    head.zero_grad();
    for (auto& c : calib_) {
      c.g_mu.setZero();
      c.g_log_sigma.setZero();
    }
  }

  std::vector<double> save_values() {
    std::vector<double> out;
    for (const auto& b : param_blocks()) out.insert(out.end(), b.value, b.value + b.size);
    return out;
  }

  void load_values(const std::vector<double>& flat) {
    std::size_t at = 0;
    for (auto& b : param_blocks()) {
      require(at + static_cast<std::size_t>(b.size) <= flat.size(), Error::Kind::Contract,
              "parameter snapshot size mismatch");
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(at),
                flat.begin() + static_cast<std::ptrdiff_t>(at + static_cast<std::size_t>(b.size)), b.value);
      at += static_cast<std::size_t>(b.size);
    }
    require(at == flat.size(), Error::Kind::Contract, "parameter snapshot size mismatch");
  }

  // ---- serialization --------------------------------------------------------

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config"] = cfg.to_json();
    j["blocks"]["source"] = source_embed.to_json();
    j["blocks"]["calib"] = calib_embed.to_json();
    if (cfg.has_categoricals()) j["blocks"]["cat"] = cat_embed.to_json();
    j["blocks"]["head"] = head.to_json();
    nlohmann::json cals = nlohmann::json::array();
    for (const auto& c : calib_) {
      nlohmann::json jc;
      jc["source_id"] = c.source_id;
      jc["names"] = c.names;
      jc["slots"] = c.slots;
      jc["mu_raw"] = std::vector<double>(c.mu_raw.data(), c.mu_raw.data() + c.mu_raw.size());
      jc["log_sigma"] = std::vector<double>(c.log_sigma.data(), c.log_sigma.data() + c.log_sigma.size());
      jc["frozen"] = c.frozen;
      cals.push_back(std::move(jc));
    }
    j["calib_sources"] = std::move(cals);
    j["bounds"]["lb_std"] = std::vector<double>(lb_std_.data(), lb_std_.data() + lb_std_.size());
    j["bounds"]["ub_std"] = std::vector<double>(ub_std_.data(), ub_std_.data() + ub_std_.size());
    j["source_names"] = source_names_;
    j["is_hf"] = is_hf_;
    j["owned"] = owned_;
    j["theta_names"] = theta_names_;
    return j;
  }

  static Network from_json(const nlohmann::json& j) {
    Network n;
    n.cfg = NetworkConfig::from_json(j.at("config"));
    n.source_embed = Mlp::from_json(j.at("blocks").at("source"));
    n.calib_embed = Mlp::from_json(j.at("blocks").at("calib"));
    if (n.cfg.has_categoricals()) n.cat_embed = Mlp::from_json(j.at("blocks").at("cat"));
    n.head = Mlp::from_json(j.at("blocks").at("head"));
    for (const auto& jc : j.at("calib_sources")) {
      CalibSource c;
      c.source_id = jc.at("source_id").get<int>();
      c.names = jc.at("names").get<std::vector<std::string>>();
      c.slots = jc.at("slots").get<std::vector<int>>();
      const auto mu = jc.at("mu_raw").get<std::vector<double>>();
      const auto ls = jc.at("log_sigma").get<std::vector<double>>();
      c.mu_raw = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
      c.log_sigma = Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
      c.g_mu = Eigen::VectorXd::Zero(c.mu_raw.size());
      c.g_log_sigma = Eigen::VectorXd::Zero(c.log_sigma.size());
      c.frozen = jc.at("frozen").get<std::vector<std::uint8_t>>();
      n.calib_.push_back(std::move(c));
    }
    const auto lb = j.at("bounds").at("lb_std").get<std::vector<double>>();
    const auto ub = j.at("bounds").at("ub_std").get<std::vector<double>>();
    n.lb_std_ = Eigen::Map<const Eigen::VectorXd>(lb.data(), static_cast<Eigen::Index>(lb.size()));
    n.ub_std_ = Eigen::Map<const Eigen::VectorXd>(ub.data(), static_cast<Eigen::Index>(ub.size()));
    n.source_names_ = j.at("source_names").get<std::vector<std::string>>();
    n.is_hf_ = j.at("is_hf").get<std::vector<std::uint8_t>>();
    n.owned_ = j.at("owned").get<std::vector<std::vector<int>>>();
    n.theta_names_ = j.at("theta_names").get<std::vector<std::string>>();
    return n;
  }

  NetworkConfig cfg;
  Mlp source_embed;   // block 0
  Mlp calib_embed;    // block 1
  Mlp cat_embed;      // block 2 (compiled out when no categoricals)
  Mlp head;           // block 3

 private:
  void configure_blocks() {
    std::vector<int> d0{cfg.n_sources};
    d0.insert(d0.end(), cfg.embed_hidden.begin(), cfg.embed_hidden.end());
    d0.push_back(cfg.latent_dim);
    source_embed.configure(d0);

    std::vector<int> d1{cfg.latent_dim + cfg.theta_dim};
    d1.insert(d1.end(), cfg.embed_hidden.begin(), cfg.embed_hidden.end());
    d1.push_back(cfg.latent_dim);
    calib_embed.configure(d1);

    if (cfg.has_categoricals()) {
      std::vector<int> d2{cfg.cat_onehot_dim()};
      d2.insert(d2.end(), cfg.embed_hidden.begin(), cfg.embed_hidden.end());
      d2.push_back(cfg.latent_dim);
      cat_embed.configure(d2);
    }

    std::vector<int> d3{cfg.x_dim + cfg.latent_dim + (cfg.has_categoricals() ? cfg.latent_dim : 0)};
    d3.insert(d3.end(), cfg.head_hidden.begin(), cfg.head_hidden.end());
    d3.push_back(2 * cfg.y_dim);
    head.configure(d3);
  }

  std::vector<CalibSource> calib_;
  Eigen::VectorXd lb_std_, ub_std_;
  std::vector<std::string> source_names_;
  std::vector<std::uint8_t> is_hf_;
  std::vector<std::vector<int>> owned_;
  std::vector<std::string> theta_names_;
};

}  // namespace procal
