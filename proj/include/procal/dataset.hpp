#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "procal/common.hpp"
#include "procal/standardizer.hpp"

namespace procal {

// One data source. Source 0 is the high-fidelity source by convention; it
// owns no calibration parameters. Low-fidelity sources own an ordered subset
// of the global calibration-parameter union.
struct SourceSpec {
  int source_id = 0;
  std::string name;
  bool is_hf = false;
  std::vector<std::string> calib_param_names;
  int n_samples = 0;

  nlohmann::json to_json() const {
    return {{"name", name}, {"hf", is_hf}, {"calib", calib_param_names}, {"n_samples", n_samples}};
  }
};

// Physical-unit training domain of the calibration parameters. Sampled
// estimates are clamped into this box, so it must cover the observed data.
struct CalibDomain {
  std::vector<std::string> names;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    return -1;
  }

  void validate() const {
    require(static_cast<int>(names.size()) == lower.size() && lower.size() == upper.size(),
            Error::Kind::Config, "calibration domain arrays have mismatched sizes");
    for (Eigen::Index i = 0; i < lower.size(); ++i)
      require(lower[i] < upper[i], Error::Kind::Config,
              "calibration domain empty for parameter " + names[i]);
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t i = 0; i < names.size(); ++i)
      j[names[i]] = {lower[static_cast<Eigen::Index>(i)], upper[static_cast<Eigen::Index>(i)]};
    return j;
  }

  static CalibDomain from_json(const nlohmann::json& j, const std::vector<std::string>& union_order) {
    CalibDomain d;
    d.names = union_order;
    d.lower.resize(static_cast<Eigen::Index>(union_order.size()));
    d.upper.resize(static_cast<Eigen::Index>(union_order.size()));
    for (std::size_t i = 0; i < union_order.size(); ++i) {
      require(j.contains(union_order[i]), Error::Kind::Config,
              "calibration domain missing parameter " + union_order[i]);
      d.lower[static_cast<Eigen::Index>(i)] = j.at(union_order[i]).at(0).get<double>();
      d.upper[static_cast<Eigen::Index>(i)] = j.at(union_order[i]).at(1).get<double>();
    }
    d.validate();
    return d;
  }
};

// Column layout and source roster of a multi-source dataset. The theta union
// is the ordered global list of calibration parameters; a parameter shared by
// several sources occupies a single slot.
struct DatasetSchema {
  std::vector<SourceSpec> sources;
  std::vector<std::string> theta_union;
  int x_dim = 0;
  int y_dim = 0;
  std::vector<int> cat_cards;

  int n_sources() const { return static_cast<int>(sources.size()); }
  int theta_dim() const { return static_cast<int>(theta_union.size()); }
  int cat_vars() const { return static_cast<int>(cat_cards.size()); }

  int hf_source_id() const {
    for (const auto& s : sources)
      if (s.is_hf) return s.source_id;
    fail(Error::Kind::Config, "schema has no high-fidelity source");
  }

  int theta_slot(const std::string& name) const {
    for (std::size_t i = 0; i < theta_union.size(); ++i)
      if (theta_union[i] == name) return static_cast<int>(i);
    return -1;
  }

  std::vector<int> owned_slots(int source_id) const {
    std::vector<int> out;
    for (const auto& n : sources.at(static_cast<std::size_t>(source_id)).calib_param_names) {
      const int slot = theta_slot(n);
      require(slot >= 0, Error::Kind::Config, "calibration parameter not in union: " + n);
      out.push_back(slot);
    }
    return out;
  }

  void validate() const {
    require(x_dim >= 1 && y_dim >= 1, Error::Kind::Config, "schema requires x_dim >= 1 and y_dim >= 1");
    int hf_count = 0;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      require(sources[i].source_id == static_cast<int>(i), Error::Kind::Config,
              "source ids must be contiguous starting at 0");
      if (sources[i].is_hf) {
        ++hf_count;
        require(sources[i].calib_param_names.empty(), Error::Kind::Config,
                "high-fidelity source must not own calibration parameters");
      }
      std::vector<std::string> seen;
      for (const auto& n : sources[i].calib_param_names) {
        require(theta_slot(n) >= 0, Error::Kind::Config,
                "parameter " + n + " of source " + sources[i].name + " missing from union");
        require(std::find(seen.begin(), seen.end(), n) == seen.end(), Error::Kind::Config,
                "parameter " + n + " duplicated within source " + sources[i].name);
        seen.push_back(n);
      }
    }
    require(hf_count == 1, Error::Kind::Config, "schema must contain exactly one high-fidelity source");
    for (std::size_t i = 0; i < theta_union.size(); ++i)
      for (std::size_t k = i + 1; k < theta_union.size(); ++k)
        require(theta_union[i] != theta_union[k], Error::Kind::Config,
                "duplicate union parameter " + theta_union[i]);
    for (int c : cat_cards)
      require(c >= 2, Error::Kind::Config, "categorical cardinality must be >= 2");
  }

  nlohmann::json to_json() const {
    nlohmann::json srcs = nlohmann::json::array();
    for (const auto& s : sources) srcs.push_back(s.to_json());
    return {{"sources", srcs}, {"theta_union", theta_union}, {"x_dim", x_dim},
            {"y_dim", y_dim},  {"cat_cards", cat_cards}};
  }

  static DatasetSchema from_json(const nlohmann::json& j) {
    DatasetSchema s;
    int id = 0;
    for (const auto& js : j.at("sources")) {
      SourceSpec spec;
      spec.source_id = id++;
      spec.name = js.at("name").get<std::string>();
      spec.is_hf = js.at("hf").get<bool>();
      spec.calib_param_names = js.at("calib").get<std::vector<std::string>>();
      if (js.contains("n_samples")) spec.n_samples = js.at("n_samples").get<int>();
      s.sources.push_back(std::move(spec));
    }
    s.theta_union = j.at("theta_union").get<std::vector<std::string>>();
    s.x_dim = j.at("x_dim").get<int>();
    s.y_dim = j.at("y_dim").get<int>();
    if (j.contains("cat_cards")) s.cat_cards = j.at("cat_cards").get<std::vector<int>>();
    s.validate();
    return s;
  }
};

// One sample. theta is laid out over the global union; theta_present marks
// the entries this record actually carries (exactly the slots its source
// owns; empty for high-fidelity records).
struct Record {
  int source_id = 0;
  Eigen::VectorXd x;
  std::vector<int> cat;
  Eigen::VectorXd theta;
  std::vector<std::uint8_t> theta_present;
  Eigen::VectorXd y;
};

class MultiSourceDataset {
 public:
  DatasetSchema schema;
  CalibDomain domain;
  std::vector<Record> records;
  Standardizer scaler;     // fitted transform the records currently live in
  bool standardized = false;

  int n_records() const { return static_cast<int>(records.size()); }

  std::vector<int> counts_per_source() const {
    std::vector<int> counts(static_cast<std::size_t>(schema.n_sources()), 0);
    for (const auto& r : records) counts[static_cast<std::size_t>(r.source_id)]++;
    return counts;
  }

  void refresh_counts() {
    const auto counts = counts_per_source();
    for (auto& s : schema.sources) s.n_samples = counts[static_cast<std::size_t>(s.source_id)];
  }
};

// ---------------------------------------------------------------------------
// One-hot encoding of categorical levels.

inline Eigen::VectorXd one_hot(int level, int cardinality) {
  require(cardinality >= 1, Error::Kind::Contract, "one_hot: cardinality must be positive");
  require(level >= 0 && level < cardinality, Error::Kind::Data,
          "encoding error: level " + std::to_string(level) + " out of range [0," +
              std::to_string(cardinality) + ")");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(cardinality);
  v[level] = 1.0;
  return v;
}

// ---------------------------------------------------------------------------
// Calibration-input masking. Entries owned by the record's source keep their
// data values; everything else takes the fill value. High-fidelity records
// are zero-masked unconditionally, which makes their outputs structurally
// insensitive to any dummy theta.

inline Eigen::VectorXd mask_theta(const DatasetSchema& schema, const Record& record,
                                  const Eigen::VectorXd& fill) {
  const int d = schema.theta_dim();
  require(record.theta.size() == d && fill.size() == d &&
              static_cast<int>(record.theta_present.size()) == d,
          Error::Kind::Contract, "mask_theta: shape mismatch against the parameter union");
  const SourceSpec& src = schema.sources.at(static_cast<std::size_t>(record.source_id));
  if (src.is_hf) return Eigen::VectorXd::Zero(d);

  std::vector<std::uint8_t> owned(static_cast<std::size_t>(d), 0);
  for (int slot : schema.owned_slots(record.source_id)) owned[static_cast<std::size_t>(slot)] = 1;

  Eigen::VectorXd out(d);
  for (int i = 0; i < d; ++i) {
    const bool keep = owned[static_cast<std::size_t>(i)] && record.theta_present[static_cast<std::size_t>(i)];
    out[i] = keep ? record.theta[i] : fill[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Delimited-file ingestion. Columns: source, x_1..x_dx, [tc_1..], theta_1..,
// y_1..y_ny. An empty theta cell means the parameter is absent for that row.

inline std::vector<std::string> expected_header(const DatasetSchema& s) {
  std::vector<std::string> h{"source"};
  for (int i = 1; i <= s.x_dim; ++i) h.push_back("x_" + std::to_string(i));
  for (int i = 1; i <= s.cat_vars(); ++i) h.push_back("tc_" + std::to_string(i));
  for (int i = 1; i <= s.theta_dim(); ++i) h.push_back("theta_" + std::to_string(i));
  for (int i = 1; i <= s.y_dim; ++i) h.push_back("y_" + std::to_string(i));
  return h;
}

inline MultiSourceDataset load_dataset(const std::string& path, const DatasetSchema& schema,
                                       std::optional<CalibDomain> domain = std::nullopt) {
  schema.validate();
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;

  // Skip comment lines, take the header.
  std::string header;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    header = line;
    break;
  }
  const auto expect = expected_header(schema);
  const auto have = split_line(header, ',');
  require(have.size() == expect.size(), Error::Kind::Data,
          "schema error: " + path + " has " + std::to_string(have.size()) + " columns, expected " +
              std::to_string(expect.size()));
  for (std::size_t i = 0; i < expect.size(); ++i)
    require(have[i] == expect[i], Error::Kind::Data,
            "schema error: column " + std::to_string(i + 1) + " is '" + have[i] + "', expected '" +
                expect[i] + "' in " + path);

  std::map<std::string, int> source_by_name;
  for (const auto& s : schema.sources) source_by_name[s.name] = s.source_id;

  MultiSourceDataset ds;
  ds.schema = schema;
  if (domain) {
    ds.domain = *domain;
  } else {
    ds.domain.names = schema.theta_union;
    ds.domain.lower = Eigen::VectorXd::Constant(schema.theta_dim(), std::numeric_limits<double>::max());
    ds.domain.upper = Eigen::VectorXd::Constant(schema.theta_dim(), std::numeric_limits<double>::lowest());
  }

  std::vector<std::vector<std::uint8_t>> owned_by_source;
  for (const auto& s : schema.sources) {
    std::vector<std::uint8_t> owned(static_cast<std::size_t>(schema.theta_dim()), 0);
    for (int slot : schema.owned_slots(s.source_id)) owned[static_cast<std::size_t>(slot)] = 1;
    owned_by_source.push_back(std::move(owned));
  }

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_line(line, ',');
    const std::string where = path + ":" + std::to_string(line_no);
    require(cells.size() == expect.size(), Error::Kind::Data,
            "schema error: wrong cell count at " + where);

    Record r;
    auto it = source_by_name.find(cells[0]);
    require(it != source_by_name.end(), Error::Kind::Data,
            "data error: unknown source '" + cells[0] + "' at " + where);
    r.source_id = it->second;

    std::size_t c = 1;
    r.x.resize(schema.x_dim);
    for (int i = 0; i < schema.x_dim; ++i) r.x[i] = parse_double(cells[c++], where);
    for (int i = 0; i < schema.cat_vars(); ++i) {
      const double v = parse_double(cells[c++], where);
      const int level = static_cast<int>(std::llround(v));
      require(level >= 0 && level < schema.cat_cards[static_cast<std::size_t>(i)], Error::Kind::Data,
              "data error: categorical level out of range at " + where);
      r.cat.push_back(level);
    }
    r.theta = Eigen::VectorXd::Zero(schema.theta_dim());
    r.theta_present.assign(static_cast<std::size_t>(schema.theta_dim()), 0);
    for (int i = 0; i < schema.theta_dim(); ++i) {
      const std::string& cell = cells[c++];
      if (cell.empty()) continue;
      require(owned_by_source[static_cast<std::size_t>(r.source_id)][static_cast<std::size_t>(i)] != 0,
              Error::Kind::Data,
              "consistency error: source " + cells[0] + " carries a value for unowned parameter " +
                  schema.theta_union[static_cast<std::size_t>(i)] + " at " + where);
      r.theta[i] = parse_double(cell, where);
      r.theta_present[static_cast<std::size_t>(i)] = 1;
      if (!domain) {
        ds.domain.lower[i] = std::min(ds.domain.lower[i], r.theta[i]);
        ds.domain.upper[i] = std::max(ds.domain.upper[i], r.theta[i]);
      }
    }
    // Owned parameters must all be present.
    for (int i = 0; i < schema.theta_dim(); ++i)
      if (owned_by_source[static_cast<std::size_t>(r.source_id)][static_cast<std::size_t>(i)])
        require(r.theta_present[static_cast<std::size_t>(i)] != 0, Error::Kind::Data,
                "consistency error: missing value for owned parameter " +
                    schema.theta_union[static_cast<std::size_t>(i)] + " at " + where);

    r.y.resize(schema.y_dim);
    for (int i = 0; i < schema.y_dim; ++i) r.y[i] = parse_double(cells[c++], where);
    ds.records.push_back(std::move(r));
  }

  ds.refresh_counts();
  for (const auto& s : schema.sources)
    if (s.n_samples > 0)
      require(ds.schema.sources[static_cast<std::size_t>(s.source_id)].n_samples == s.n_samples,
              Error::Kind::Data,
              "data error: source " + s.name + " has " +
                  std::to_string(ds.schema.sources[static_cast<std::size_t>(s.source_id)].n_samples) +
                  " rows, schema expects " + std::to_string(s.n_samples));
  if (!domain && schema.theta_dim() > 0) {
    // Widen inferred bounds marginally so observed extremes are interior.
    for (int i = 0; i < schema.theta_dim(); ++i) {
      require(ds.domain.lower[i] < ds.domain.upper[i], Error::Kind::Data,
              "data error: cannot infer calibration domain for " +
                  schema.theta_union[static_cast<std::size_t>(i)]);
      const double pad = 1e-6 * (ds.domain.upper[i] - ds.domain.lower[i]);
      ds.domain.lower[i] -= pad;
      ds.domain.upper[i] += pad;
    }
  }
  return ds;
}

inline void save_dataset(const MultiSourceDataset& ds, const std::string& path,
                         const std::string& header_comment = "") {
  std::ostringstream out;
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  const auto header = expected_header(ds.schema);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& r : ds.records) {
    out << ds.schema.sources[static_cast<std::size_t>(r.source_id)].name;
    for (int i = 0; i < ds.schema.x_dim; ++i) out << "," << fmt_full(r.x[i]);
    for (int i = 0; i < ds.schema.cat_vars(); ++i) out << "," << r.cat[static_cast<std::size_t>(i)];
    for (int i = 0; i < ds.schema.theta_dim(); ++i) {
      out << ",";
      if (r.theta_present[static_cast<std::size_t>(i)]) out << fmt_full(r.theta[i]);
    }
    for (int i = 0; i < ds.schema.y_dim; ++i) out << "," << fmt_full(r.y[i]);
    out << "\n";
  }
  write_text_file(path, out.str());
}

// ---------------------------------------------------------------------------
// Standardization. Statistics come from the dataset they are fit on (the
// training split); theta statistics use present entries only.

inline Standardizer fit_standardizer(const MultiSourceDataset& ds) {
  require(!ds.standardized, Error::Kind::Contract, "fit_standardizer expects raw data");
  Standardizer s;
  for (int i = 0; i < ds.schema.x_dim; ++i) {
    std::vector<double> col;
    col.reserve(ds.records.size());
    for (const auto& r : ds.records) col.push_back(r.x[i]);
    s.x.push_back(fit_column(col, "x_" + std::to_string(i + 1)));
  }
  for (int i = 0; i < ds.schema.theta_dim(); ++i) {
    std::vector<double> col;
    for (const auto& r : ds.records)
      if (r.theta_present[static_cast<std::size_t>(i)]) col.push_back(r.theta[i]);
    s.theta.push_back(fit_column(col, "theta_" + std::to_string(i + 1)));
  }
  for (int i = 0; i < ds.schema.y_dim; ++i) {
    std::vector<double> col;
    col.reserve(ds.records.size());
    for (const auto& r : ds.records) col.push_back(r.y[i]);
    s.y.push_back(fit_column(col, "y_" + std::to_string(i + 1)));
  }
  s.fitted = true;
  return s;
}

inline MultiSourceDataset apply_standardizer(const MultiSourceDataset& ds, const Standardizer& s) {
  require(s.fitted, Error::Kind::Contract, "standardizer not fitted");
  require(!ds.standardized, Error::Kind::Contract, "dataset already standardized");
  MultiSourceDataset out = ds;
  for (auto& r : out.records) {
    for (int i = 0; i < out.schema.x_dim; ++i) r.x[i] = s.x[static_cast<std::size_t>(i)].transform(r.x[i]);
    for (int i = 0; i < out.schema.theta_dim(); ++i)
      if (r.theta_present[static_cast<std::size_t>(i)])
        r.theta[i] = s.theta[static_cast<std::size_t>(i)].transform(r.theta[i]);
    for (int i = 0; i < out.schema.y_dim; ++i) r.y[i] = s.y[static_cast<std::size_t>(i)].transform(r.y[i]);
  }
  out.scaler = s;
  out.standardized = true;
  return out;
}

inline MultiSourceDataset standardize(const MultiSourceDataset& train) {
  return apply_standardizer(train, fit_standardizer(train));
}

// ---------------------------------------------------------------------------
// Deterministic stratified train/validation split. `fraction` is the share
// of each source's rows assigned to validation (rounded); a source left with
// zero training rows is an error.

inline std::pair<MultiSourceDataset, MultiSourceDataset> split_train_val(
    const MultiSourceDataset& ds, double fraction, std::uint64_t seed) {
  require(fraction > 0.0 && fraction < 1.0, Error::Kind::Contract,
          "split fraction must lie in (0, 1)");
  MultiSourceDataset train, val;
  train.schema = val.schema = ds.schema;
  train.domain = val.domain = ds.domain;
  train.scaler = val.scaler = ds.scaler;
  train.standardized = val.standardized = ds.standardized;

  for (const auto& src : ds.schema.sources) {
    std::vector<int> idx;
    for (int i = 0; i < ds.n_records(); ++i)
      if (ds.records[static_cast<std::size_t>(i)].source_id == src.source_id) idx.push_back(i);
    const int n = static_cast<int>(idx.size());
    if (n == 0) continue;
    const int n_val = static_cast<int>(std::llround(fraction * n));
    require(n - n_val > 0, Error::Kind::Data,
            "split error: source " + src.name + " left with no training samples");
    auto rng = substream(seed, "split/" + src.name);
    std::vector<int> order(idx.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::uint8_t> to_val(idx.size(), 0);
    for (int k = 0; k < n_val; ++k) to_val[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = 1;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Record& r = ds.records[static_cast<std::size_t>(idx[k])];
      (to_val[k] ? val : train).records.push_back(r);
    }
  }
  train.refresh_counts();
  val.refresh_counts();
  return {std::move(train), std::move(val)};
}

}  // namespace procal
