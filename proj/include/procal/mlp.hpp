#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include <json.hpp>

#include "procal/common.hpp"

namespace procal {

// Dense layer with gradient buffers. Weights follow the usual fan-in uniform
// init, U(-1/sqrt(in), 1/sqrt(in)).
struct Linear {
  Eigen::MatrixXd W;   // (out, in)
  Eigen::VectorXd b;
  Eigen::MatrixXd gW;
  Eigen::VectorXd gb;

  void init(int in, int out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    W.resize(out, in);
    b.resize(out);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) W(r, c) = u(rng);
      b[r] = u(rng);
    }
    gW = Eigen::MatrixXd::Zero(out, in);
    gb = Eigen::VectorXd::Zero(out);
  }
};

struct MlpCache {
  std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts[L] = output
};

// Feed-forward stack: tanh on hidden layers, linear output.
class Mlp {
 public:
  Mlp() = default;

  void configure(const std::vector<int>& dims) {
    require(dims.size() >= 2, Error::Kind::Contract, "mlp needs at least input and output dims");
    dims_ = dims;
    layers_.resize(dims.size() - 1);
  }

  void init_params(std::mt19937_64& rng) {
    for (std::size_t l = 0; l < layers_.size(); ++l)
      layers_[l].init(dims_[l], dims_[l + 1], rng);
  }

  int in_dim() const { return dims_.front(); }
  int out_dim() const { return dims_.back(); }
  const std::vector<int>& dims() const { return dims_; }
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

  // X: (n, in). Returns (n, out). The cache keeps every layer input for the
  // backward pass.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& X, MlpCache* cache = nullptr) const {
    require(X.cols() == in_dim(), Error::Kind::Contract, "mlp input width mismatch");
    Eigen::MatrixXd a = X;
    if (cache) {
      cache->acts.clear();
      cache->acts.push_back(a);
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Eigen::MatrixXd pre = (a * layers_[l].W.transpose()).rowwise() + layers_[l].b.transpose();
      a = (l + 1 < layers_.size()) ? pre.array().tanh().matrix() : std::move(pre);
      if (cache) cache->acts.push_back(a);
    }
    return a;
  }

  // Accumulates parameter gradients and returns the gradient w.r.t. the input.
  Eigen::MatrixXd backward(const MlpCache& cache, const Eigen::MatrixXd& d_out) {
    require(cache.acts.size() == layers_.size() + 1, Error::Kind::Contract, "stale mlp cache");
    Eigen::MatrixXd d_pre = d_out;
    for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
      const Eigen::MatrixXd& input = cache.acts[static_cast<std::size_t>(l)];
      layers_[static_cast<std::size_t>(l)].gW.noalias() += d_pre.transpose() * input;
      layers_[static_cast<std::size_t>(l)].gb += d_pre.colwise().sum().transpose();
      Eigen::MatrixXd d_in = d_pre * layers_[static_cast<std::size_t>(l)].W;
      if (l > 0) {
        // Input of layer l is tanh(pre) of layer l-1.
        const Eigen::MatrixXd& t = cache.acts[static_cast<std::size_t>(l)];
        d_pre = (d_in.array() * (1.0 - t.array().square())).matrix();
      } else {
        d_pre = std::move(d_in);
      }
    }
    return d_pre;
  }

  void zero_grad() {
    for (auto& l : layers_) {
      l.gW.setZero();
      l.gb.setZero();
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["dims"] = dims_;
    nlohmann::json ls = nlohmann::json::array();
    for (const auto& l : layers_) {
      nlohmann::json w = nlohmann::json::array();
      for (Eigen::Index r = 0; r < l.W.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < l.W.cols(); ++c) row.push_back(l.W(r, c));
        w.push_back(std::move(row));
      }
      nlohmann::json bias = nlohmann::json::array();
      for (Eigen::Index r = 0; r < l.b.size(); ++r) bias.push_back(l.b[r]);
      ls.push_back({{"W", std::move(w)}, {"b", std::move(bias)}});
    }
    j["layers"] = std::move(ls);
    return j;
  }

  static Mlp from_json(const nlohmann::json& j) {
    Mlp m;
    m.configure(j.at("dims").get<std::vector<int>>());
    const auto& ls = j.at("layers");
    require(ls.size() == m.layers_.size(), Error::Kind::Data, "checkpoint layer count mismatch");
    for (std::size_t l = 0; l < m.layers_.size(); ++l) {
      const int out = m.dims_[l + 1];
      const int in = m.dims_[l];
      auto& lin = m.layers_[l];
      lin.W.resize(out, in);
      lin.b.resize(out);
      const auto& w = ls[l].at("W");
      const auto& bias = ls[l].at("b");
      for (int r = 0; r < out; ++r) {
        for (int c = 0; c < in; ++c) lin.W(r, c) = w.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
        lin.b[r] = bias.at(static_cast<std::size_t>(r)).get<double>();
      }
      lin.gW = Eigen::MatrixXd::Zero(out, in);
      lin.gb = Eigen::VectorXd::Zero(out);
    }
    return m;
  }

 private:
  std::vector<int> dims_;
  std::vector<Linear> layers_;
};

}  // namespace procal
