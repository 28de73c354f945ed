#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "procal/common.hpp"

namespace procal {

// Linear scaling of one column to zero mean and unit standard deviation.
// Population convention (divide by n), so [1,2,3] maps to +-1.2247...
struct ColumnStats {
  double mean = 0.0;
  double stddev = 1.0;

  double transform(double v) const { return (v - mean) / stddev; }
  double inverse(double v) const { return mean + stddev * v; }
};

inline ColumnStats fit_column(const std::vector<double>& values, const std::string& column_name) {
  require(!values.empty(), Error::Kind::Data, "degenerate column (no values): " + column_name);
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  const double stddev = std::sqrt(var);
  require(stddev > 1e-12 * (std::abs(mean) + 1.0), Error::Kind::Data,
          "degenerate column (zero variance): " + column_name);
  return ColumnStats{mean, stddev};
}

// Per-column statistics for x, theta, and y. Statistics are fit on the
// training split only and reused for validation/test and for all inverse
// transforms at prediction time.
struct Standardizer {
  std::vector<ColumnStats> x;
  std::vector<ColumnStats> theta;
  std::vector<ColumnStats> y;
  bool fitted = false;

  nlohmann::json to_json() const {
    auto cols = [](const std::vector<ColumnStats>& v) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& c : v) arr.push_back({{"mean", c.mean}, {"stddev", c.stddev}});
      return arr;
    };
    return {{"x", cols(x)}, {"theta", cols(theta)}, {"y", cols(y)}, {"fitted", fitted}};
  }

  static Standardizer from_json(const nlohmann::json& j) {
    Standardizer s;
    auto cols = [](const nlohmann::json& arr) {
      std::vector<ColumnStats> v;
      for (const auto& c : arr) v.push_back(ColumnStats{c.at("mean").get<double>(), c.at("stddev").get<double>()});
      return v;
    };
    s.x = cols(j.at("x"));
    s.theta = cols(j.at("theta"));
    s.y = cols(j.at("y"));
    s.fitted = j.at("fitted").get<bool>();
    return s;
  }
};

}  // namespace procal
