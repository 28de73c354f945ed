// procal command-line interface: config-driven generation, training,
// evaluation, and multi-step calibration runs.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "procal/analytic.hpp"
#include "procal/evaluation.hpp"
#include "procal/run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonFlags {
  std::string config_path = "procal.json";
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

std::string resolve_dir(const std::string& dir) {
  const char* root = std::getenv("PROCAL_OUT_ROOT");
  if (root != nullptr && *root != '\0' && !fs::path(dir).is_absolute())
    return (fs::path(root) / dir).string();
  return dir;
}

procal::RunConfig load_config(const CommonFlags& flags) {
  std::string text;
  try {
    text = procal::read_text_file(flags.config_path);
  } catch (const procal::Error&) {
    procal::fail(procal::Error::Kind::Config, "config error: cannot open " + flags.config_path);
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    procal::fail(procal::Error::Kind::Config,
                 "config error: cannot parse " + flags.config_path + ": " + e.what());
  }
  for (const auto& s : flags.sets) procal::apply_dot_override(j, s);
  procal::RunConfig cfg;
  try {
    cfg = procal::RunConfig::from_json(j);
  } catch (const json::exception& e) {
    procal::fail(procal::Error::Kind::Config, std::string("config error: ") + e.what());
  }
  if (flags.seed) cfg.seed = *flags.seed;
  return cfg;
}

std::string artifact_header(const procal::RunConfig& cfg) {
  return "config=" + procal::hex64(cfg.hash()) + " seed=" + std::to_string(cfg.seed);
}

// ---------------------------------------------------------------------------

int cmd_generate(const CommonFlags& flags, const std::vector<std::string>& sources, bool force) {
  procal::RunConfig cfg = load_config(flags);
  if (!sources.empty()) cfg.analytic.sources = sources;
  if (flags.out) cfg.paths.data_dir = *flags.out;
  const std::string data_dir = resolve_dir(cfg.paths.data_dir);

  if (!sources.empty() && cfg.analytic.n_train.size() != sources.size()) {
    // Keep the canonical counts for the canonical sources.
    std::vector<int> counts;
    const std::vector<int> canonical{40, 200, 100};
    for (const auto& name : sources)
      counts.push_back(canonical[static_cast<std::size_t>(procal::analytic_source_index(name))]);
    cfg.analytic.n_train = counts;
  }

  const std::string manifest_path = data_dir + "/manifest.json";
  if (fs::exists(manifest_path) && !force)
    procal::fail(procal::Error::Kind::Config,
                 "config error: " + manifest_path + " exists; pass --force to overwrite");

  procal::AnalyticConfig acfg = cfg.analytic;
  acfg.seed = cfg.seed;
  const procal::AnalyticBundle bundle = procal::generate_study(acfg);

  fs::create_directories(data_dir);
  const std::string header = artifact_header(cfg);
  procal::save_dataset(bundle.train, data_dir + "/train.csv", header);
  procal::save_dataset(bundle.val, data_dir + "/val.csv", header);
  procal::save_dataset(bundle.test, data_dir + "/test.csv", header);

  procal::DatasetManifest manifest;
  manifest.schema = bundle.train.schema;
  for (auto& s : manifest.schema.sources) s.n_samples = 0;  // counts live in the files
  manifest.domain = bundle.train.domain;
  manifest.seed = cfg.seed;
  manifest.config_hash = cfg.hash();
  manifest.analytic = acfg;
  manifest.train_hash = procal::hash_file(data_dir + "/train.csv");
  manifest.val_hash = procal::hash_file(data_dir + "/val.csv");
  manifest.test_hash = procal::hash_file(data_dir + "/test.csv");
  procal::write_text_file(manifest_path, manifest.to_json().dump(1));

  const auto counts = bundle.train.counts_per_source();
  std::cout << "wrote " << data_dir << " (train rows:";
  for (int c : counts) std::cout << " " << c;
  std::cout << ", val rows: " << bundle.val.n_records() << ", test rows: " << bundle.test.n_records()
            << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct LoadedData {
  procal::DatasetManifest manifest;
  procal::MultiSourceDataset train_raw, val_raw;
  std::string data_dir;
};

LoadedData load_train_val(const procal::RunConfig& cfg) {
  LoadedData d;
  d.data_dir = resolve_dir(cfg.paths.data_dir);
  d.manifest = procal::DatasetManifest::load(d.data_dir);
  d.train_raw = procal::load_dataset(d.data_dir + "/" + d.manifest.train_file, d.manifest.schema,
                                     d.manifest.domain);
  d.val_raw = procal::load_dataset(d.data_dir + "/" + d.manifest.val_file, d.manifest.schema,
                                   d.manifest.domain);
  return d;
}

void write_train_artifacts(const procal::RunConfig& cfg, const std::string& run_dir,
                           const procal::Network& net, const procal::Standardizer& scaler,
                           const procal::TrainResult& result, std::uint64_t dataset_hash,
                           const procal::CalibDomain& domain) {
  fs::create_directories(run_dir);
  procal::Checkpoint ckpt;
  ckpt.network = net;
  ckpt.scaler = scaler;
  ckpt.seed = cfg.seed;
  ckpt.config_hash = cfg.hash();
  ckpt.dataset_hash = dataset_hash;
  ckpt.best_epoch = result.best_epoch;
  ckpt.domain = domain;
  procal::save_checkpoint(ckpt, run_dir + "/checkpoint.json");
  procal::write_text_file(run_dir + "/standardizer.json", scaler.to_json().dump(1));
  procal::write_text_file(run_dir + "/history.csv",
                          procal::history_csv(result.history, cfg.hash(), cfg.seed));
  json report;
  report["config_hash"] = procal::hex64(cfg.hash());
  report["seed"] = cfg.seed;
  report["best_epoch"] = result.best_epoch;
  report["best_val_total"] = result.best_val_total;
  report["final_train"] = result.final_train.to_json();
  procal::write_text_file(run_dir + "/loss_report.json", report.dump(1));
  procal::write_text_file(run_dir + "/config_resolved.json", cfg.to_json().dump(1));
}

int cmd_train(const CommonFlags& flags, std::optional<int> epochs) {
  procal::RunConfig cfg = load_config(flags);
  if (epochs) cfg.train.epochs = *epochs;
  if (flags.out) cfg.paths.run_dir = *flags.out;
  const std::string run_dir = resolve_dir(cfg.paths.run_dir);

  LoadedData data = load_train_val(cfg);
  const procal::Standardizer scaler = procal::fit_standardizer(data.train_raw);
  const auto train_std = procal::apply_standardizer(data.train_raw, scaler);
  const auto val_std = procal::apply_standardizer(data.val_raw, scaler);

  procal::Network net;
  net.init(cfg.network, train_std, cfg.seed);
  procal::TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.seed;
  const procal::TrainResult result = procal::train(net, train_std, val_std, cfg.loss, tcfg);

  write_train_artifacts(cfg, run_dir, net, scaler, result,
                        procal::hash_file(data.data_dir + "/" + data.manifest.train_file),
                        data.train_raw.domain);
  std::cout << "trained " << cfg.train.epochs << " epochs; best epoch " << result.best_epoch
            << " (val total " << result.best_val_total << "); artifacts in " << run_dir << "\n";
  return 0;
}

int cmd_two_step(const CommonFlags& flags) {
  procal::RunConfig cfg = load_config(flags);
  if (flags.out) cfg.paths.run_dir = *flags.out;
  const std::string run_dir = resolve_dir(cfg.paths.run_dir);
  procal::require(!cfg.steps.empty(), procal::Error::Kind::Config,
                  "config error: two-step requires a non-empty steps list");

  LoadedData data = load_train_val(cfg);
  const procal::Standardizer scaler = procal::fit_standardizer(data.train_raw);
  const auto train_std = procal::apply_standardizer(data.train_raw, scaler);

  procal::Network net;
  net.init(cfg.network, train_std, cfg.seed);
  procal::TrainConfig tcfg = cfg.train;
  tcfg.seed = cfg.seed;
  const auto results = procal::two_step_calibrate(net, data.train_raw, data.val_raw, scaler,
                                                  cfg.loss, tcfg, cfg.steps);

  fs::create_directories(run_dir);
  for (std::size_t s = 0; s < results.size(); ++s)
    procal::write_text_file(run_dir + "/history_step" + std::to_string(s + 1) + ".csv",
                            procal::history_csv(results[s].history, cfg.hash(), cfg.seed));
  write_train_artifacts(cfg, run_dir, net, scaler, results.back(),
                        procal::hash_file(data.data_dir + "/" + data.manifest.train_file),
                        data.train_raw.domain);
  std::cout << "completed " << results.size() << " calibration steps; artifacts in " << run_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_eval(const CommonFlags& flags, bool with_oracle, bool with_latents) {
  procal::RunConfig cfg = load_config(flags);
  if (flags.out) cfg.paths.run_dir = *flags.out;
  const std::string run_dir = resolve_dir(cfg.paths.run_dir);
  const std::string data_dir = resolve_dir(cfg.paths.data_dir);

  const procal::DatasetManifest manifest = procal::DatasetManifest::load(data_dir);
  const procal::Checkpoint ckpt = procal::load_checkpoint(run_dir + "/checkpoint.json");
  const std::uint64_t train_hash = procal::hash_file(data_dir + "/" + manifest.train_file);
  procal::require(train_hash == ckpt.dataset_hash, procal::Error::Kind::Data,
                  "data error: checkpoint was trained on a different dataset (hash mismatch)");

  const auto test_raw =
      procal::load_dataset(data_dir + "/" + manifest.test_file, manifest.schema, manifest.domain);
  const auto test_std = procal::apply_standardizer(test_raw, ckpt.scaler);

  const std::string header = "# procal-eval v1 config=" + procal::hex64(ckpt.config_hash) +
                             " seed=" + std::to_string(ckpt.seed) + "\n";
  json report;
  report["config_hash"] = procal::hex64(ckpt.config_hash);
  report["seed"] = ckpt.seed;
  report["best_epoch"] = ckpt.best_epoch;

  // Emulation accuracy table.
  const auto rows = procal::emulate_hf_suite(ckpt.network, test_std, cfg.eval.n_mc, ckpt.seed);
  {
    std::ostringstream out;
    out << header << "case";
    for (int i = 1; i <= manifest.schema.y_dim; ++i) out << ",y_" << i;
    out << "\n";
    for (const auto& row : rows) {
      out << row.label;
      for (double v : row.rrmse_per_output) out << "," << procal::fmt_full(v);
      out << "\n";
    }
    procal::write_text_file(run_dir + "/rrmse_table.csv", out.str());
    json jr = json::array();
    for (const auto& row : rows) jr.push_back({{"case", row.label}, {"rrmse", row.rrmse_per_output}});
    report["rrmse"] = std::move(jr);
  }

  // Posterior summaries, density curves, and sample histograms.
  const auto summaries = procal::posterior_report(ckpt.network, ckpt.scaler, cfg.eval.n_mc, ckpt.seed);
  {
    std::ostringstream out;
    out << header << "source,param,mean,stddev,q025,q975,mu_raw,sigma_raw,clamp_mu\n";
    for (const auto& s : summaries)
      out << s.source_name << "," << s.param_name << "," << procal::fmt_full(s.mean) << ","
          << procal::fmt_full(s.stddev) << "," << procal::fmt_full(s.q025) << ","
          << procal::fmt_full(s.q975) << "," << procal::fmt_full(s.mu_raw) << ","
          << procal::fmt_full(s.sigma_raw) << "," << procal::fmt_full(s.clamp_mu) << "\n";
    procal::write_text_file(run_dir + "/posterior_report.csv", out.str());
    json jp = json::array();
    for (const auto& s : summaries)
      jp.push_back({{"source", s.source_name},
                    {"param", s.param_name},
                    {"mean", s.mean},
                    {"stddev", s.stddev},
                    {"q025", s.q025},
                    {"q975", s.q975},
                    {"mu_raw", s.mu_raw},
                    {"sigma_raw", s.sigma_raw},
                    {"clamp_mu", s.clamp_mu}});
    report["posterior"] = std::move(jp);
  }
  for (const auto& cs : ckpt.network.calib()) {
    const std::string sname = ckpt.network.source_names()[static_cast<std::size_t>(cs.source_id)];
    for (int p = 0; p < cs.n_params(); ++p) {
      const int slot = cs.slots[static_cast<std::size_t>(p)];
      const auto& col = ckpt.scaler.theta[static_cast<std::size_t>(slot)];
      const double lb = manifest.domain.lower[slot], ub = manifest.domain.upper[slot];
      const double mean_phys = col.inverse(cs.mu_raw[p]);
      const double sd_phys = col.stddev * std::exp(cs.log_sigma[p]);
      std::ostringstream pdf;
      pdf << header << "theta,prior_density,gaussian_density\n";
      const int n_grid = 401;
      for (int g = 0; g < n_grid; ++g) {
        const double th = lb + (ub - lb) * g / (n_grid - 1);
        const double z = (th - mean_phys) / sd_phys;
        const double dens = std::exp(-0.5 * z * z) / (sd_phys * std::sqrt(2.0 * M_PI));
        pdf << procal::fmt_full(th) << "," << procal::fmt_full(1.0 / (ub - lb)) << ","
            << procal::fmt_full(dens) << "\n";
      }
      const std::string pname = cs.names[static_cast<std::size_t>(p)];
      procal::write_text_file(run_dir + "/posterior_pdf_" + sname + "_" + pname + ".csv", pdf.str());

      // Monte Carlo histogram of the clamped samples.
      auto rng = procal::substream(ckpt.seed, "hist/" + sname + "/" + pname);
      std::normal_distribution<double> gauss(0.0, 1.0);
      const int bins = 50;
      std::vector<int> count(bins, 0);
      const int n_mc = cfg.eval.n_mc;
      for (int m = 0; m < n_mc; ++m) {
        Eigen::VectorXd eps(cs.n_params());
        for (int q = 0; q < cs.n_params(); ++q) eps[q] = gauss(rng);
        const double v = col.inverse(ckpt.network.sample_theta(cs.source_id, eps).theta[p]);
        int bin = static_cast<int>((v - lb) / (ub - lb) * bins);
        bin = std::min(std::max(bin, 0), bins - 1);
        count[static_cast<std::size_t>(bin)]++;
      }
      std::ostringstream hist;
      hist << header << "bin_lo,bin_hi,density\n";
      for (int bkt = 0; bkt < bins; ++bkt) {
        const double blo = lb + (ub - lb) * bkt / bins;
        const double bhi = lb + (ub - lb) * (bkt + 1) / bins;
        const double dens = count[static_cast<std::size_t>(bkt)] / (n_mc * (bhi - blo));
        hist << procal::fmt_full(blo) << "," << procal::fmt_full(bhi) << "," << procal::fmt_full(dens)
             << "\n";
      }
      procal::write_text_file(run_dir + "/posterior_hist_" + sname + "_" + pname + ".csv", hist.str());
    }
  }

  if (with_latents) {
    const auto trace = procal::export_latents(ckpt.network, ckpt.scaler, manifest.domain,
                                              cfg.eval.n_probe, ckpt.seed);
    std::ostringstream zs;
    zs << header << "label,z_1,z_2\n";
    for (const auto& [label, z] : trace.z_source)
      zs << label << "," << procal::fmt_full(z[0]) << "," << procal::fmt_full(z[1]) << "\n";
    procal::write_text_file(run_dir + "/latents_sources.csv", zs.str());

    std::ostringstream zhf;
    zhf << header << "kind,z_1,z_2\n";
    zhf << "hf," << procal::fmt_full(trace.z_theta_hf[0]) << ","
        << procal::fmt_full(trace.z_theta_hf[1]) << "\n";
    procal::write_text_file(run_dir + "/latents_theta_hf.csv", zhf.str());

    json jl;
    for (std::size_t c = 0; c < trace.z_theta_prior.size(); ++c) {
      const auto& [name, prior] = trace.z_theta_prior[c];
      const auto& post = trace.z_theta_posterior[c].second;
      std::ostringstream zt;
      zt << header << "kind,z_1,z_2\n";
      for (Eigen::Index k = 0; k < prior.points.rows(); ++k)
        zt << "prior," << procal::fmt_full(prior.points(k, 0)) << ","
           << procal::fmt_full(prior.points(k, 1)) << "\n";
      for (Eigen::Index k = 0; k < post.points.rows(); ++k)
        zt << "posterior," << procal::fmt_full(post.points(k, 0)) << ","
           << procal::fmt_full(post.points(k, 1)) << "\n";
      procal::write_text_file(run_dir + "/latents_theta_" + name + ".csv", zt.str());
      jl[name] = {{"bbox_area_prior", procal::bbox_area(prior.points)},
                  {"bbox_area_posterior", procal::bbox_area(post.points)}};
    }
    for (const auto& [name, dist] : trace.hf_distance) jl[name]["hf_distance"] = dist;
    report["latents"] = std::move(jl);
  }

  if (with_oracle) {
    procal::require(manifest.analytic.has_value(), procal::Error::Kind::Config,
                    "config error: --oracle needs an analytic dataset (no generator echo in manifest)");
    const procal::AnalyticConfig acfg = *manifest.analytic;
    const auto x_grid = procal::test_grid(cfg.eval.oracle_x_points, procal::GridMode::Linspace, 0,
                                          acfg.x_lo, acfg.x_hi);
    auto hf_eval = [](double x, const Eigen::VectorXd&, Eigen::VectorXd& out) {
      Eigen::Vector3d y;
      if (!procal::try_eval_source(0, x, Eigen::VectorXd(0), y)) return false;
      out = y;
      return true;
    };
    json jo;
    for (const auto& src : manifest.schema.sources) {
      if (src.is_hf) continue;
      const int bench = procal::analytic_source_index(src.name);
      auto lf_eval = [bench](double x, const Eigen::VectorXd& th, Eigen::VectorXd& out) {
        Eigen::Vector3d y;
        if (!procal::try_eval_source(bench, x, th, y)) return false;
        out = y;
        return true;
      };
      const auto slots = manifest.schema.owned_slots(src.source_id);
      Eigen::VectorXd lo(static_cast<Eigen::Index>(slots.size())), hi(static_cast<Eigen::Index>(slots.size()));
      for (std::size_t p = 0; p < slots.size(); ++p) {
        lo[static_cast<Eigen::Index>(p)] = manifest.domain.lower[slots[p]];
        hi[static_cast<Eigen::Index>(p)] = manifest.domain.upper[slots[p]];
      }
      const auto res = procal::theta_mse_oracle(lf_eval, hf_eval, lo, hi,
                                                cfg.eval.oracle_resolution, x_grid, 3);
      std::ostringstream out;
      out << header << "# argmin=";
      for (Eigen::Index a = 0; a < res.theta_best.size(); ++a)
        out << (a ? "," : "") << procal::fmt_full(res.theta_best[a]);
      out << " mse=" << procal::fmt_full(res.mse_best) << " skipped=" << res.skipped << "\n";
      for (std::size_t p = 0; p < slots.size(); ++p) out << "theta_" << (p + 1) << ",";
      out << "mse\n";
      for (const auto& [theta, mse] : res.surface) {
        for (Eigen::Index a = 0; a < theta.size(); ++a) out << procal::fmt_full(theta[a]) << ",";
        out << procal::fmt_full(mse) << "\n";
      }
      procal::write_text_file(run_dir + "/oracle_" + src.name + ".csv", out.str());
      jo[src.name] = {{"theta_mse", std::vector<double>(res.theta_best.data(),
                                                        res.theta_best.data() + res.theta_best.size())},
                      {"mse", res.mse_best},
                      {"skipped", res.skipped}};
      std::cout << "oracle " << src.name << ": theta_mse =";
      for (Eigen::Index a = 0; a < res.theta_best.size(); ++a) std::cout << " " << res.theta_best[a];
      std::cout << "\n";
    }
    report["oracle"] = std::move(jo);
  }

  procal::write_text_file(run_dir + "/eval_report.json", report.dump(1));
  std::cout << "evaluation artifacts in " << run_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"procal: simultaneous probabilistic emulation and calibration of computer models"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::uint64_t seed_value = 0;
  std::string out_value;
  std::vector<CLI::Option*> seed_opts, out_opts;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", flags.config_path, "run configuration file")->capture_default_str();
    cmd->add_option("--set", flags.sets, "dot-path config override, e.g. train.epochs=100");
    seed_opts.push_back(cmd->add_option("--seed", seed_value, "root seed override"));
    out_opts.push_back(cmd->add_option("--out", out_value, "output directory override"));
  };

  auto* gen = app.add_subcommand("generate", "write the analytic benchmark dataset");
  std::string sources_csv;
  bool force = false;
  add_common(gen);
  gen->add_option("--sources", sources_csv, "comma-separated source subset, e.g. s0,s2");
  gen->add_flag("--force", force, "overwrite an existing dataset directory");

  auto* train_cmd = app.add_subcommand("train", "train on a generated or ingested dataset");
  int epochs_value = 0;
  add_common(train_cmd);
  auto* epochs_opt = train_cmd->add_option("--epochs", epochs_value, "override the epoch count");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint against the test set");
  bool with_oracle = false, with_latents = false;
  add_common(eval_cmd);
  eval_cmd->add_flag("--oracle", with_oracle, "run the brute-force calibration reference");
  eval_cmd->add_flag("--latents", with_latents, "export latent-space traces");

  auto* two_step = app.add_subcommand("two-step", "run the multi-step calibration workflow");
  add_common(two_step);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  for (auto* o : seed_opts)
    if (o->count()) flags.seed = seed_value;
  for (auto* o : out_opts)
    if (o->count()) flags.out = out_value;

  try {
    if (gen->parsed()) {
      std::vector<std::string> sources;
      if (!sources_csv.empty())
        for (const auto& s : procal::split_line(sources_csv, ',')) sources.push_back(s);
      return cmd_generate(flags, sources, force);
    }
    if (train_cmd->parsed())
      return cmd_train(flags, epochs_opt->count() ? std::optional<int>(epochs_value) : std::nullopt);
    if (eval_cmd->parsed()) return cmd_eval(flags, with_oracle, with_latents);
    if (two_step->parsed()) return cmd_two_step(flags);
  } catch (const procal::Error& e) {
    std::cerr << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 5;
  }
  return 0;
}
