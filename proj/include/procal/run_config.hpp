#pragma once

#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "procal/analytic.hpp"
#include "procal/loss.hpp"
#include "procal/network.hpp"
#include "procal/trainer.hpp"

namespace procal {

struct PathsConfig {
  std::string data_dir = "data";
  std::string run_dir = "run";

  nlohmann::json to_json() const { return {{"data_dir", data_dir}, {"run_dir", run_dir}}; }
  static PathsConfig from_json(const nlohmann::json& j) {
    PathsConfig p;
    if (j.contains("data_dir")) p.data_dir = j.at("data_dir").get<std::string>();
    if (j.contains("run_dir")) p.run_dir = j.at("run_dir").get<std::string>();
    return p;
  }
};

struct EvalConfig {
  int n_mc = 4096;
  int n_probe = 500;
  double oracle_resolution = 0.01;
  int oracle_x_points = 1000;

  nlohmann::json to_json() const {
    return {{"n_mc", n_mc},
            {"n_probe", n_probe},
            {"oracle_resolution", oracle_resolution},
            {"oracle_x_points", oracle_x_points}};
  }
  static EvalConfig from_json(const nlohmann::json& j) {
    EvalConfig e;
    if (j.contains("n_mc")) e.n_mc = j.at("n_mc").get<int>();
    if (j.contains("n_probe")) e.n_probe = j.at("n_probe").get<int>();
    if (j.contains("oracle_resolution")) e.oracle_resolution = j.at("oracle_resolution").get<double>();
    if (j.contains("oracle_x_points")) e.oracle_x_points = j.at("oracle_x_points").get<int>();
    return e;
  }
};

// One config file drives a whole reproducible run; command-line flags are
// overrides on top of it. The run-defining subset (everything except eval
// knobs and paths) is hashed into every artifact.
struct RunConfig {
  std::uint64_t seed = 1;
  PathsConfig paths;
  AnalyticConfig analytic;
  NetworkConfig network;
  LossConfig loss;
  TrainConfig train;
  EvalConfig eval;
  std::vector<StepSpec> steps;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["paths"] = paths.to_json();
    j["analytic"] = analytic.to_json();
    j["network"] = network.to_json();
    j["loss"] = loss.to_json();
    j["train"] = train.to_json();
    j["eval"] = eval.to_json();
    nlohmann::json st = nlohmann::json::array();
    for (const auto& s : steps) st.push_back(s.to_json());
    j["steps"] = std::move(st);
    return j;
  }

  static RunConfig from_json(const nlohmann::json& j) {
    RunConfig c;
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("paths")) c.paths = PathsConfig::from_json(j.at("paths"));
    if (j.contains("analytic")) c.analytic = AnalyticConfig::from_json(j.at("analytic"));
    if (j.contains("network")) c.network = NetworkConfig::from_json(j.at("network"));
    if (j.contains("loss")) c.loss = LossConfig::from_json(j.at("loss"));
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
    if (j.contains("eval")) c.eval = EvalConfig::from_json(j.at("eval"));
    if (j.contains("steps"))
      for (const auto& s : j.at("steps")) c.steps.push_back(StepSpec::from_json(s));
    return c;
  }

  // Hash of the run-defining content: seed, data protocol, architecture,
  // loss, training schedule, and steps.
  std::uint64_t hash() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["analytic"] = analytic.to_json();
    j["network"] = network.to_json();
    j["loss"] = loss.to_json();
    j["train"] = train.to_json();
    nlohmann::json st = nlohmann::json::array();
    for (const auto& s : steps) st.push_back(s.to_json());
    j["steps"] = std::move(st);
    return fnv1a64(j.dump());
  }

  static RunConfig load(const std::string& path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
      fail(Error::Kind::Config, "config error: cannot parse " + path + ": " + e.what());
    }
    try {
      return from_json(j);
    } catch (const nlohmann::json::exception& e) {
      fail(Error::Kind::Config, "config error: bad field in " + path + ": " + e.what());
    }
  }
};

// Generic "--set a.b.c=value" override applied to the raw JSON before parsing.
inline void apply_dot_override(nlohmann::json& j, const std::string& spec) {
  const auto eq = spec.find('=');
  require(eq != std::string::npos && eq > 0, Error::Kind::Config,
          "config error: override must look like path.to.key=value: " + spec);
  const std::string path = spec.substr(0, eq);
  const std::string value = spec.substr(eq + 1);
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = value;  // bare strings allowed
  }
  nlohmann::json* at = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    require(!key.empty(), Error::Kind::Config, "config error: empty key in override: " + spec);
    if (dot == std::string::npos) {
      (*at)[key] = parsed;
      break;
    }
    at = &((*at)[key]);
    start = dot + 1;
  }
}

// ---------------------------------------------------------------------------
// Dataset-directory manifest: schema, domain, file names and hashes, plus the
// analytic generator echo when the data came from the built-in benchmark.

struct DatasetManifest {
  DatasetSchema schema;
  CalibDomain domain;
  std::string train_file = "train.csv";
  std::string val_file = "val.csv";
  std::string test_file = "test.csv";
  std::uint64_t train_hash = 0, val_hash = 0, test_hash = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::optional<AnalyticConfig> analytic;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["format"] = "procal-dataset";
    j["version"] = 1;
    j["seed"] = seed;
    j["config_hash"] = hex64(config_hash);
    j["schema"] = schema.to_json();
    j["domain"] = domain.to_json();
    j["files"] = {{"train", train_file}, {"val", val_file}, {"test", test_file}};
    j["hashes"] = {{"train", hex64(train_hash)}, {"val", hex64(val_hash)}, {"test", hex64(test_hash)}};
    if (analytic) j["analytic"] = analytic->to_json();
    return j;
  }

  static DatasetManifest from_json(const nlohmann::json& j) {
    require(j.value("format", "") == std::string("procal-dataset"), Error::Kind::Data,
            "not a dataset manifest");
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    m.schema = DatasetSchema::from_json(j.at("schema"));
    m.domain = CalibDomain::from_json(j.at("domain"), m.schema.theta_union);
    m.train_file = j.at("files").at("train").get<std::string>();
    m.val_file = j.at("files").at("val").get<std::string>();
    m.test_file = j.at("files").at("test").get<std::string>();
    m.train_hash = std::stoull(j.at("hashes").at("train").get<std::string>(), nullptr, 16);
    m.val_hash = std::stoull(j.at("hashes").at("val").get<std::string>(), nullptr, 16);
    m.test_hash = std::stoull(j.at("hashes").at("test").get<std::string>(), nullptr, 16);
    if (j.contains("analytic")) m.analytic = AnalyticConfig::from_json(j.at("analytic"));
    return m;
  }

  static DatasetManifest load(const std::string& data_dir) {
    const std::string path = data_dir + "/manifest.json";
    try {
      return from_json(nlohmann::json::parse(read_text_file(path)));
    } catch (const nlohmann::json::exception& e) {
      fail(Error::Kind::Data, "data error: bad manifest " + path + ": " + e.what());
    }
  }
};

}  // namespace procal
