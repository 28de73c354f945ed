#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "procal/loss.hpp"
#include "procal/network.hpp"

namespace procal {

struct TrainConfig {
  int epochs = 4000;
  double learning_rate = 1e-2;
  int batch_size = 0;  // 0 = full batch
  double weight_decay = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int log_interval = 100;
  std::uint64_t seed = 1;
  // Parameter name -> pinned physical value; a missing value (NaN in JSON:
  // null) pins the parameter at its current estimate.
  std::map<std::string, std::optional<double>> freeze;

  void validate() const {
    require(epochs >= 1, Error::Kind::Config, "epochs must be >= 1");
    require(learning_rate > 0.0, Error::Kind::Config, "learning rate must be positive");
    require(log_interval >= 1, Error::Kind::Config, "log interval must be >= 1");
    require(batch_size >= 0, Error::Kind::Config, "batch size must be >= 0");
  }

  nlohmann::json to_json() const {
    nlohmann::json fz = nlohmann::json::object();
    for (const auto& [k, v] : freeze) {
      if (v)
        fz[k] = *v;
      else
        fz[k] = nullptr;
    }
    return {{"epochs", epochs},
            {"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"weight_decay", weight_decay},
            {"adam_beta1", adam_beta1},
            {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps},
            {"log_interval", log_interval},
            {"freeze", fz}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("adam_beta1")) c.adam_beta1 = j.at("adam_beta1").get<double>();
    if (j.contains("adam_beta2")) c.adam_beta2 = j.at("adam_beta2").get<double>();
    if (j.contains("adam_eps")) c.adam_eps = j.at("adam_eps").get<double>();
    if (j.contains("log_interval")) c.log_interval = j.at("log_interval").get<int>();
    if (j.contains("freeze")) {
      for (const auto& [k, v] : j.at("freeze").items())
        c.freeze[k] = v.is_null() ? std::optional<double>{} : std::optional<double>{v.get<double>()};
    }
    c.validate();
    return c;
  }
};

// Adaptive moment estimation with decoupled weight decay. Decay applies only
// to blocks flagged for it (network weights); calibration parameters are
// excluded, and frozen entries are skipped entirely.
class AdamW {
 public:
  void step(std::vector<ParamBlock>& blocks, double lr, double weight_decay, double beta1,
            double beta2, double eps) {
    if (m_.empty()) {
      for (const auto& b : blocks) {
        m_.emplace_back(Eigen::VectorXd::Zero(b.size));
        v_.emplace_back(Eigen::VectorXd::Zero(b.size));
      }
    }
    require(m_.size() == blocks.size(), Error::Kind::Contract, "optimizer state out of sync");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      auto& b = blocks[i];
      auto& m = m_[i];
      auto& v = v_[i];
      for (Eigen::Index k = 0; k < b.size; ++k) {
        if (b.frozen && b.frozen[k]) continue;
        const double g = b.grad[k];
        m[k] = beta1 * m[k] + (1.0 - beta1) * g;
        v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
        const double m_hat = m[k] / bc1;
        const double v_hat = v[k] / bc2;
        b.value[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        if (b.decay) b.value[k] -= lr * weight_decay * b.value[k];
      }
    }
  }

  void reset() {
    m_.clear();
    v_.clear();
    t_ = 0;
  }

 private:
  std::vector<Eigen::VectorXd> m_, v_;
  std::int64_t t_ = 0;
};

struct HistoryRow {
  int epoch = 0;
  LossReport train;
  LossReport val;
};

struct TrainResult {
  std::vector<HistoryRow> history;
  int best_epoch = 0;
  double best_val_total = 0.0;
  LossReport final_train;
};

// Pins the named calibration parameters in every source that owns them.
// A value pins at that physical coordinate; no value keeps the current
// estimate. Unknown names are a configuration error.
inline void apply_freeze(Network& net, const Standardizer& scaler,
                         const std::map<std::string, std::optional<double>>& freeze) {
  for (auto& cs : net.calib())
    for (auto& f : cs.frozen) f = 0;
  for (const auto& [name, value] : freeze) {
    bool found = false;
    for (auto& cs : net.calib()) {
      for (int p = 0; p < cs.n_params(); ++p) {
        if (cs.names[static_cast<std::size_t>(p)] != name) continue;
        found = true;
        cs.frozen[static_cast<std::size_t>(p)] = 1;
        if (value) {
          const int slot = cs.slots[static_cast<std::size_t>(p)];
          const double v = scaler.theta[static_cast<std::size_t>(slot)].transform(*value);
          cs.mu_raw[p] = net.clamp_inverse(slot, v);
        }
      }
    }
    bool in_union = false;
    for (const auto& n : net.theta_names())
      if (n == name) in_union = true;
    require(in_union && found, Error::Kind::Config,
            "config error: frozen parameter '" + name + "' is not a calibration parameter here");
  }
}

namespace detail {

inline std::vector<std::vector<int>> make_batches(const MultiSourceDataset& ds, int batch_size,
                                                  std::uint64_t seed, int epoch) {
  std::vector<std::vector<int>> batches;
  if (batch_size <= 0 || batch_size >= ds.n_records()) {
    std::vector<int> all(static_cast<std::size_t>(ds.n_records()));
    std::iota(all.begin(), all.end(), 0);
    batches.push_back(std::move(all));
    return batches;
  }
  // Stratified mini-batches: shuffle each source, deal proportional slices so
  // every batch keeps records (and in particular HF records) of each source.
  const int n = ds.n_records();
  const int n_batches = (n + batch_size - 1) / batch_size;
  batches.assign(static_cast<std::size_t>(n_batches), {});
  for (const auto& src : ds.schema.sources) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if (ds.records[static_cast<std::size_t>(i)].source_id == src.source_id) idx.push_back(i);
    auto rng = substream(seed, "batch/" + src.name + "/" + std::to_string(epoch));
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < idx.size(); ++k)
      batches[k % static_cast<std::size_t>(n_batches)].push_back(idx[k]);
  }
  return batches;
}

}  // namespace detail

// Full optimization loop. Per epoch: one reparameterized draw per LF source,
// one composite-loss backward pass, one AdamW step. Validation is scored at
// the posterior mean (eps = 0) every log interval and the best-validation
// parameters are restored into the network at the end.
inline TrainResult train(Network& net, const MultiSourceDataset& train_std,
                         const MultiSourceDataset& val_std, const LossConfig& loss_cfg,
                         const TrainConfig& cfg,
                         const std::function<void(int, Network&)>& on_epoch = {}) {
  cfg.validate();
  loss_cfg.validate();
  require(train_std.standardized && val_std.standardized, Error::Kind::Contract,
          "train expects standardized datasets");
  apply_freeze(net, train_std.scaler, cfg.freeze);

  const BatchView full_batch = BatchView::assemble(train_std);
  const BatchView val_batch = BatchView::assemble(val_std);
  auto rng_eps = substream(cfg.seed, "eps");
  std::normal_distribution<double> gauss(0.0, 1.0);

  AdamW opt;
  auto blocks = net.param_blocks();

  TrainResult result;
  std::vector<double> best_values = net.save_values();
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  LossReport last_train;

  const std::vector<Eigen::VectorXd> zero_eps = [&net] {
    std::vector<Eigen::VectorXd> z;
    for (const auto& c : net.calib()) z.push_back(Eigen::VectorXd::Zero(c.n_params()));
    return z;
  }();

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = detail::make_batches(train_std, cfg.batch_size, cfg.seed, epoch);
    for (const auto& batch_idx : batches) {
      std::vector<Eigen::VectorXd> eps;
      for (const auto& c : net.calib()) {
        Eigen::VectorXd e(c.n_params());
        for (int p = 0; p < c.n_params(); ++p) e[p] = gauss(rng_eps);
        eps.push_back(std::move(e));
      }
      net.zero_grad();
      const BatchView* bv = &full_batch;
      BatchView scratch;
      if (batches.size() > 1 || static_cast<int>(batch_idx.size()) != train_std.n_records()) {
        scratch = BatchView::assemble(train_std, batch_idx);
        bv = &scratch;
      }
      last_train = total_loss(net, *bv, loss_cfg, eps, /*backward=*/true);
      const std::string bad = last_train.first_non_finite();
      require(bad.empty(), Error::Kind::Numeric,
              "non-finite loss (term " + bad + ") at epoch " + std::to_string(epoch));
      opt.step(blocks, cfg.learning_rate, cfg.weight_decay, cfg.adam_beta1, cfg.adam_beta2,
               cfg.adam_eps);
    }

    if (epoch % cfg.log_interval == 0 || epoch == cfg.epochs) {
      LossReport val_report = total_loss(net, val_batch, loss_cfg, zero_eps, /*backward=*/false);
      result.history.push_back({epoch, last_train, val_report});
      if (val_report.total < best_val) {
        best_val = val_report.total;
        best_epoch = epoch;
        best_values = net.save_values();
      }
    }
    if (on_epoch) on_epoch(epoch, net);
  }

  result.final_train = last_train;
  result.best_epoch = best_epoch;
  result.best_val_total = best_val;
  net.load_values(best_values);
  return result;
}

// ---------------------------------------------------------------------------
// Multi-step calibration with per-step record filters and parameter freezes.

struct RowFilter {
  std::string column;  // "x_<k>", physical units
  std::optional<double> min;
  std::optional<double> max;

  int x_index(const DatasetSchema& schema) const {
    require(column.rfind("x_", 0) == 0, Error::Kind::Config,
            "config error: step filters accept x_<k> columns, got '" + column + "'");
    const int idx = std::stoi(column.substr(2)) - 1;
    require(idx >= 0 && idx < schema.x_dim, Error::Kind::Config,
            "config error: filter column out of range: " + column);
    return idx;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"column", column}};
    if (min) j["min"] = *min;
    if (max) j["max"] = *max;
    return j;
  }
  static RowFilter from_json(const nlohmann::json& j) {
    RowFilter f;
    f.column = j.at("column").get<std::string>();
    if (j.contains("min") && !j.at("min").is_null()) f.min = j.at("min").get<double>();
    if (j.contains("max") && !j.at("max").is_null()) f.max = j.at("max").get<double>();
    return f;
  }
};

struct StepSpec {
  std::string name;
  std::optional<RowFilter> filter;
  std::map<std::string, std::optional<double>> freeze;
  std::optional<int> epochs;
  std::optional<double> learning_rate;

  nlohmann::json to_json() const {
    nlohmann::json j{{"name", name}};
    if (filter) j["filter"] = filter->to_json();
    nlohmann::json fz = nlohmann::json::object();
    for (const auto& [k, v] : freeze) {
      if (v)
        fz[k] = *v;
      else
        fz[k] = nullptr;
    }
    j["freeze"] = fz;
    if (epochs) j["epochs"] = *epochs;
    if (learning_rate) j["learning_rate"] = *learning_rate;
    return j;
  }
  static StepSpec from_json(const nlohmann::json& j) {
    StepSpec s;
    if (j.contains("name")) s.name = j.at("name").get<std::string>();
    if (j.contains("filter") && !j.at("filter").is_null()) s.filter = RowFilter::from_json(j.at("filter"));
    if (j.contains("freeze")) {
      for (const auto& [k, v] : j.at("freeze").items())
        s.freeze[k] = v.is_null() ? std::optional<double>{} : std::optional<double>{v.get<double>()};
    }
    if (j.contains("epochs")) s.epochs = j.at("epochs").get<int>();
    if (j.contains("learning_rate")) s.learning_rate = j.at("learning_rate").get<double>();
    return s;
  }
};

inline MultiSourceDataset filter_rows(const MultiSourceDataset& raw, const RowFilter& f) {
  require(!raw.standardized, Error::Kind::Contract, "row filters apply to raw data");
  const int idx = f.x_index(raw.schema);
  MultiSourceDataset out;
  out.schema = raw.schema;
  out.domain = raw.domain;
  for (const auto& r : raw.records) {
    const double v = r.x[idx];
    if (f.min && v < *f.min) continue;
    if (f.max && v > *f.max) continue;
    out.records.push_back(r);
  }
  out.refresh_counts();
  return out;
}

// Sequential calibration. The standardizer is fit once on the full training
// split and reused in every step so the network keeps operating in one
// coordinate system; each step filters the raw rows, applies its freeze list,
// and continues from the previous step's best parameters.
inline std::vector<TrainResult> two_step_calibrate(
    Network& net, const MultiSourceDataset& raw_train, const MultiSourceDataset& raw_val,
    const Standardizer& scaler, const LossConfig& loss_cfg, const TrainConfig& base_cfg,
    const std::vector<StepSpec>& steps,
    const std::function<void(int, int, Network&)>& on_epoch = {}) {
  require(!steps.empty(), Error::Kind::Config, "config error: step list is empty");
  std::vector<TrainResult> results;
  for (std::size_t s = 0; s < steps.size(); ++s) {
    const StepSpec& step = steps[s];
    MultiSourceDataset step_train = step.filter ? filter_rows(raw_train, *step.filter) : raw_train;
    MultiSourceDataset step_val = step.filter ? filter_rows(raw_val, *step.filter) : raw_val;
    require(step_train.n_records() > 0, Error::Kind::Config,
            "config error: step " + std::to_string(s + 1) + " filter selects no training records");
    const int hf_id = step_train.schema.hf_source_id();
    require(step_train.counts_per_source()[static_cast<std::size_t>(hf_id)] > 0, Error::Kind::Config,
            "config error: step " + std::to_string(s + 1) + " filter drops all high-fidelity records");
    require(step_val.n_records() > 0, Error::Kind::Config,
            "config error: step " + std::to_string(s + 1) + " filter selects no validation records");

    TrainConfig cfg = base_cfg;
    cfg.freeze = step.freeze;
    if (step.epochs) cfg.epochs = *step.epochs;
    if (step.learning_rate) cfg.learning_rate = *step.learning_rate;
    cfg.seed = base_cfg.seed + s;  // independent draw streams per step

    const MultiSourceDataset train_std = apply_standardizer(step_train, scaler);
    const MultiSourceDataset val_std = apply_standardizer(step_val, scaler);
    auto step_cb = on_epoch
                       ? std::function<void(int, Network&)>(
                             [&on_epoch, s](int epoch, Network& n) { on_epoch(static_cast<int>(s), epoch, n); })
                       : std::function<void(int, Network&)>{};
    results.push_back(train(net, train_std, val_std, loss_cfg, cfg, step_cb));
  }
  return results;
}

// ---------------------------------------------------------------------------
// History and checkpoint artifacts.

inline std::string history_csv(const std::vector<HistoryRow>& history, std::uint64_t config_hash,
                               std::uint64_t seed) {
  std::ostringstream out;
  out << "# procal-history v1 config=" << hex64(config_hash) << " seed=" << seed << "\n";
  out << "epoch,train_total,train_nll_em,train_nll_cal,train_is_em,train_is_cal,train_kl,"
         "val_total,val_nll_em,val_nll_cal,val_is_em,val_is_cal,val_kl\n";
  for (const auto& row : history) {
    out << row.epoch;
    for (const LossReport* r : {&row.train, &row.val})
      out << "," << fmt_full(r->total) << "," << fmt_full(r->nll_em) << "," << fmt_full(r->nll_cal)
          << "," << fmt_full(r->is_em) << "," << fmt_full(r->is_cal) << "," << fmt_full(r->kl);
    out << "\n";
  }
  return out.str();
}

struct Checkpoint {
  Network network;
  Standardizer scaler;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::uint64_t dataset_hash = 0;
  int best_epoch = 0;
  CalibDomain domain;

  nlohmann::json to_json() const {
    return {{"format", "procal-checkpoint"},
            {"version", 1},
            {"seed", seed},
            {"config_hash", hex64(config_hash)},
            {"dataset_hash", hex64(dataset_hash)},
            {"best_epoch", best_epoch},
            {"network", network.to_json()},
            {"standardizer", scaler.to_json()},
            {"domain", domain.to_json()},
            {"domain_order", domain.names}};
  }

  static Checkpoint from_json(const nlohmann::json& j) {
    require(j.value("format", "") == std::string("procal-checkpoint"), Error::Kind::Data,
            "not a checkpoint file");
    require(j.at("version").get<int>() == 1, Error::Kind::Data, "unsupported checkpoint version");
    Checkpoint c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    c.dataset_hash = std::stoull(j.at("dataset_hash").get<std::string>(), nullptr, 16);
    c.best_epoch = j.at("best_epoch").get<int>();
    c.network = Network::from_json(j.at("network"));
    c.scaler = Standardizer::from_json(j.at("standardizer"));
    const auto order = j.at("domain_order").get<std::vector<std::string>>();
    c.domain = CalibDomain::from_json(j.at("domain"), order);
    return c;
  }
};

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  write_text_file(path, c.to_json().dump(1));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return Checkpoint::from_json(nlohmann::json::parse(read_text_file(path)));
}

}  // namespace procal
