// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. argv[1] = path to the CLI binary (used by the determinism
// criterion), argv[2] = scratch directory.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

#include "procal/analytic.hpp"
#include "procal/evaluation.hpp"
#include "procal/run_config.hpp"

using namespace procal;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d: %s — %s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------------------

struct ScenarioRun {
  std::vector<EvalRow> rows;                       // rrmse vs HF truth
  std::vector<PosteriorSummary> posterior;
  Network net;
  Standardizer scaler;
  CalibDomain domain;
  double seconds = 0.0;
};

ScenarioRun run_scenario(const std::vector<std::string>& sources, const std::vector<int>& counts,
                         std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  AnalyticConfig acfg;
  acfg.sources = sources;
  acfg.n_train = counts;
  acfg.n_test = 1000;
  acfg.seed = seed;
  const auto bundle = generate_study(acfg);

  ScenarioRun out;
  out.scaler = fit_standardizer(bundle.train);
  out.domain = bundle.train.domain;
  const auto train_std = apply_standardizer(bundle.train, out.scaler);
  const auto val_std = apply_standardizer(bundle.val, out.scaler);
  const auto test_std = apply_standardizer(bundle.test, out.scaler);

  out.net.init(NetworkConfig{}, train_std, seed);
  TrainConfig tcfg;  // reference protocol: 4000 epochs, lr 1e-2, full batch
  tcfg.seed = seed;
  tcfg.log_interval = 100;
  train(out.net, train_std, val_std, LossConfig{}, tcfg);

  out.rows = emulate_hf_suite(out.net, test_std, 4096, seed);
  out.posterior = posterior_report(out.net, out.scaler, 4096, seed);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

double posterior_mean_of(const ScenarioRun& run, const std::string& param) {
  for (const auto& p : run.posterior)
    if (p.param_name == param) return p.mean;
  fail(Error::Kind::Contract, "no posterior entry for " + param);
}

const EvalRow& row_of(const ScenarioRun& run, const std::string& label) {
  for (const auto& r : run.rows)
    if (r.label == label) return r;
  fail(Error::Kind::Contract, "no eval row " + label);
}

double max_rrmse(const EvalRow& row) {
  double m = 0.0;
  for (double v : row.rrmse_per_output) m = std::max(m, v);
  return m;
}

// ---------------------------------------------------------------------------

void criterion_1_closed_forms() {
  const auto one = [](double v) { return Eigen::VectorXd::Constant(1, v); };
  const double nll_val = nll(one(0.0), one(0.0), one(1.0));
  const double is_val = interval_score(one(3.0), one(0.0), one(1.0), 0.05);
  CalibSource cs;
  cs.source_id = 1;
  cs.names = {"a"};
  cs.slots = {0};
  cs.mu_raw = Eigen::VectorXd::Zero(1);
  cs.log_sigma = Eigen::VectorXd::Zero(1);  // sigma == sigma_p == 1
  cs.frozen = {0};
  const double kl_val = kl_term({cs}, 1.0);

  const bool pass = std::abs(nll_val - 0.91893853320467274178) <= 1e-9 &&
                    std::abs(is_val - 45.52) <= 1e-9 && std::abs(kl_val) <= 1e-9;
  report(1, "loss closed forms", pass,
         "nll(0,0,1)=" + fmt(nll_val) + " is(3,0,1,.05)=" + fmt(is_val) + " kl(sigma_p)=" + fmt(kl_val));
}

Network make_small_net(std::uint64_t seed, MultiSourceDataset* std_out = nullptr) {
  AnalyticConfig acfg;
  acfg.n_train = {12, 24, 18};
  const auto raw = generate(acfg, {12, 24, 18}, seed);
  const auto scaler = fit_standardizer(raw);
  const auto std_ds = apply_standardizer(raw, scaler);
  Network net;
  net.init(NetworkConfig{}, std_ds, seed + 1);
  if (std_out) *std_out = std_ds;
  return net;
}

void criterion_2_masking_invariance() {
  auto net = make_small_net(7);
  Record hf;
  hf.source_id = 0;
  hf.x = Eigen::VectorXd::Constant(1, -0.4);
  hf.theta = Eigen::VectorXd::Zero(3);
  hf.theta_present = {0, 0, 0};
  const auto ref = net.predict_emulation(hf);

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1000.0, 1000.0);
  bool pass = true;
  for (int trial = 0; trial < 100 && pass; ++trial) {
    Record dummy = hf;
    for (int i = 0; i < 3; ++i) dummy.theta[i] = u(rng);
    const auto out = net.predict_emulation(dummy);
    pass = std::memcmp(ref.mean.data(), out.mean.data(), 3 * sizeof(double)) == 0 &&
           std::memcmp(ref.stddev.data(), out.stddev.data(), 3 * sizeof(double)) == 0;
  }
  report(2, "high-fidelity masking invariance", pass, "100 random dummy thetas, bit-identical outputs");
}

void criterion_3_gradient_stop_and_fd() {
  MultiSourceDataset std_ds;
  auto net = make_small_net(11, &std_ds);
  const auto batch = BatchView::assemble(std_ds);
  const LossConfig lcfg;

  // (a) The emulation terms never reach the calibration posteriors.
  std::mt19937_64 rng(23);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd fill = Eigen::VectorXd::Zero(3);
  std::vector<Eigen::VectorXd> eps;
  for (const auto& cs : net.calib()) {
    Eigen::VectorXd e(cs.n_params());
    for (int p = 0; p < cs.n_params(); ++p) e[p] = gauss(rng);
    eps.push_back(e);
    const auto d = net.sample_theta(cs.source_id, e);
    for (int p = 0; p < cs.n_params(); ++p) fill[cs.slots[static_cast<std::size_t>(p)]] = d.theta[p];
  }
  net.zero_grad();
  emulation_loss(net, batch, fill, lcfg, true, nullptr);
  bool stop_exact = true;
  for (const auto& cs : net.calib())
    for (int p = 0; p < cs.n_params(); ++p)
      stop_exact = stop_exact && cs.g_mu[p] == 0.0 && cs.g_log_sigma[p] == 0.0;

  // (b) The calibration terms do, and the gradient matches central differences.
  auto cal_objective = [&]() {
    std::vector<ClampedSample> draws;
    for (std::size_t c = 0; c < net.calib().size(); ++c)
      draws.push_back(net.sample_theta(net.calib()[c].source_id, eps[c]));
    const auto [nc, ic] = calibration_loss(net, batch, draws, lcfg, false, nullptr);
    return nc + lcfg.beta_is * ic;
  };
  net.zero_grad();
  {
    std::vector<ClampedSample> draws;
    for (std::size_t c = 0; c < net.calib().size(); ++c)
      draws.push_back(net.sample_theta(net.calib()[c].source_id, eps[c]));
    calibration_loss(net, batch, draws, lcfg, true, nullptr);
  }
  bool fd_ok = true, nonzero = true;
  double worst_rel = 0.0;
  const double h = 1e-5;
  for (auto& cs : net.calib()) {
    for (int p = 0; p < cs.n_params(); ++p) {
      const double analytic = cs.g_mu[p];
      nonzero = nonzero && std::abs(analytic) > 1e-12;
      const double saved = cs.mu_raw[p];
      cs.mu_raw[p] = saved + h;
      const double up = cal_objective();
      cs.mu_raw[p] = saved - h;
      const double dn = cal_objective();
      cs.mu_raw[p] = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double rel = std::abs(analytic - fd) / std::max(std::abs(fd), 1e-12);
      worst_rel = std::max(worst_rel, rel);
      fd_ok = fd_ok && rel <= 1e-4;
    }
  }
  report(3, "gradient stop and reparameterization gradient", stop_exact && nonzero && fd_ok,
         std::string("emulation grads exactly zero: ") + (stop_exact ? "yes" : "NO") +
             ", cal-grad nonzero: " + (nonzero ? "yes" : "NO") + ", worst FD rel err " + fmt(worst_rel));
}

void criterion_4_clamp_range() {
  auto net = make_small_net(13);
  auto& cs = net.calib()[0];
  std::mt19937_64 rng(29);
  std::normal_distribution<double> gauss(0.0, 1.0);
  bool pass = true;
  const double extremes[] = {0.0, 40.0, -40.0};
  long total = 0;
  for (double shift : extremes) {
    cs.mu_raw.setConstant(shift == 0.0 ? cs.mu_raw[0] : shift);
    for (int m = 0; m < 334000 && pass; ++m) {
      Eigen::VectorXd e(cs.n_params());
      for (int p = 0; p < cs.n_params(); ++p) e[p] = gauss(rng);
      const auto s = net.sample_theta(cs.source_id, e);
      for (int p = 0; p < cs.n_params(); ++p) {
        const int slot = cs.slots[static_cast<std::size_t>(p)];
        if (!(s.theta[p] > net.lb_std(slot) && s.theta[p] < net.ub_std(slot))) pass = false;
      }
      ++total;
    }
  }
  report(4, "clamped samples strictly inside the domain", pass,
         std::to_string(total) + " draws incl. saturated means");
}

void criterion_5_per_source_normalization() {
  MultiSourceDataset std_ds;
  auto net = make_small_net(19, &std_ds);
  std::vector<int> base(static_cast<std::size_t>(std_ds.n_records()));
  std::iota(base.begin(), base.end(), 0);
  std::vector<int> tripled = base;
  for (int k = 0; k < std_ds.n_records(); ++k)
    if (std_ds.records[static_cast<std::size_t>(k)].source_id == 2) {
      tripled.push_back(k);
      tripled.push_back(k);
    }
  const Eigen::VectorXd fill = Eigen::VectorXd::Zero(3);
  const auto [a, ia] =
      emulation_loss(net, BatchView::assemble(std_ds, base), fill, LossConfig{}, false, nullptr);
  const auto [b, ib] =
      emulation_loss(net, BatchView::assemble(std_ds, tripled), fill, LossConfig{}, false, nullptr);
  (void)ia;
  (void)ib;
  const double delta = std::abs(a - b);
  report(5, "per-source normalization", delta < 1e-9,
         "triplicating one source's records changes NLL_em by " + fmt(delta));
}

void criterion_6_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  auto lf = [](double x, const Eigen::VectorXd& th, Eigen::VectorXd& out) {
    Eigen::Vector3d y;
    if (!try_eval_source(2, x, th, y)) return false;
    out = y;
    return true;
  };
  auto hf = [](double x, const Eigen::VectorXd&, Eigen::VectorXd& out) {
    Eigen::Vector3d y;
    if (!try_eval_source(0, x, Eigen::VectorXd(0), y)) return false;
    out = y;
    return true;
  };
  const auto res = theta_mse_oracle(lf, hf, Eigen::VectorXd::Constant(1, -1.0),
                                    Eigen::VectorXd::Constant(1, 2.2), 0.01,
                                    test_grid(1000, GridMode::Linspace), 3);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool pass = std::abs(res.theta_best[0] - (-0.5)) <= 0.01 + 1e-12;
  report(6, "brute-force oracle recovers theta for s2", pass,
         "theta_mse=" + fmt(res.theta_best[0]) + " (target -0.5 +- 0.01), " + fmt(secs) + "s");
}

void criteria_7_8_9_end_to_end() {
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  struct Scenario {
    std::string name;
    std::vector<std::string> sources;
    std::vector<int> counts;
  };
  const std::vector<Scenario> scenarios{
      {"s0+s2", {"s0", "s2"}, {40, 100}},
      {"s0+s1", {"s0", "s1"}, {40, 200}},
      {"all", {"s0", "s1", "s2"}, {40, 200, 100}},
  };

  std::map<std::string, std::vector<ScenarioRun>> runs;
  double total_secs = 0.0;
  for (const auto& sc : scenarios) {
    for (auto seed : seeds) {
      runs[sc.name].push_back(run_scenario(sc.sources, sc.counts, seed));
      total_secs += runs[sc.name].back().seconds;
    }
  }

  // Criterion 7: posterior mean of the s2 parameter in the s0+s2 scenario.
  double best_dev = std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;
  for (std::size_t i = 0; i < runs["s0+s2"].size(); ++i) {
    const double dev = std::abs(posterior_mean_of(runs["s0+s2"][i], "theta1_s2") - (-0.5));
    if (dev < best_dev) {
      best_dev = dev;
      best_idx = i;
    }
  }
  report(7, "end-to-end posterior recovery (s0+s2, best of 3 seeds)", best_dev <= 0.15,
         "min |posterior mean - (-0.5)| = " + fmt(best_dev) + " (tolerance 0.15), total train time " +
             fmt(total_secs) + "s");

  // Criterion 8: HF-emulation RRMSE <= 0.25 per output, every scenario.
  bool pass8 = true;
  std::string detail8;
  for (const auto& sc : scenarios) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& run : runs[sc.name]) best = std::min(best, max_rrmse(row_of(run, "hf_emulation")));
    pass8 = pass8 && best <= 0.25;
    detail8 += sc.name + ": " + fmt(best) + "  ";
  }
  report(8, "HF-emulation RRMSE <= 0.25 (best of 3 seeds per scenario)", pass8, detail8);

  // Criterion 9: calibrated-s2 emulation of HF in the s0+s2 scenario.
  double best9 = std::numeric_limits<double>::infinity();
  for (const auto& run : runs["s0+s2"]) best9 = std::min(best9, max_rrmse(row_of(run, "calibrated_s2")));
  report(9, "bias-corrected calibrated-s2 RRMSE <= 0.35", best9 <= 0.35, "best max-output RRMSE " + fmt(best9));

  // Supplementary latent check on the winning run: the fitted posterior
  // cloud covers a smaller region than the uniform prior.
  const auto& win = runs["s0+s2"][best_idx];
  const auto trace = export_latents(win.net, win.scaler, win.domain, 500, 3);
  const double prior_area = bbox_area(trace.z_theta_prior[0].second.points);
  const double post_area = bbox_area(trace.z_theta_posterior[0].second.points);
  report(9, "latent posterior cloud smaller than prior (supplementary)", post_area < prior_area,
         "area prior=" + fmt(prior_area) + " posterior=" + fmt(post_area));
}

void criterion_10_two_step_freeze() {
  AnalyticConfig acfg;
  acfg.sources = {"s0", "s1"};  // two calibration parameters
  acfg.n_train = {16, 40};
  acfg.seed = 4;
  const auto bundle = generate_study(acfg);
  const auto scaler = fit_standardizer(bundle.train);
  const auto train_std = apply_standardizer(bundle.train, scaler);
  Network net;
  net.init(NetworkConfig{}, train_std, 4);

  TrainConfig tcfg;
  tcfg.epochs = 120;
  tcfg.log_interval = 40;
  tcfg.seed = 4;

  std::vector<StepSpec> steps(2);
  steps[0].name = "elastic";
  steps[0].filter = RowFilter{"x_1", std::nullopt, 1.0};
  steps[1].name = "full";
  steps[1].freeze["theta1_s1"] = std::nullopt;
  steps[1].freeze["theta2_s1"] = std::nullopt;

  std::vector<std::array<double, 2>> traj;
  two_step_calibrate(net, bundle.train, bundle.val, scaler, LossConfig{}, tcfg, steps,
                     [&](int step, int, Network& n) {
                       if (step != 1) return;
                       const auto& cs = n.calib()[0];
                       traj.push_back({n.clamp_value(cs.slots[0], cs.mu_raw[0]),
                                       n.clamp_value(cs.slots[1], cs.mu_raw[1])});
                     });
  double drift = 0.0;
  for (const auto& v : traj)
    drift = std::max({drift, std::abs(v[0] - traj.front()[0]), std::abs(v[1] - traj.front()[1])});
  report(10, "two-step workflow keeps frozen clamp(mu) constant", drift <= 1e-12,
         "max drift across step 2 = " + fmt(drift));
}

void criterion_11_determinism(const std::string& cli, const std::string& work) {
  const std::string dir = work + "/determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);

  nlohmann::json cfg;
  cfg["seed"] = 21;
  cfg["analytic"] = {{"sources", {"s0", "s2"}}, {"n_train", {20, 50}}, {"n_test", 200}};
  cfg["train"] = {{"epochs", 200}, {"log_interval", 50}};
  cfg["eval"] = {{"n_mc", 512}, {"n_probe", 100}};

  auto run_pipeline = [&](const std::string& tag) -> bool {
    nlohmann::json c = cfg;
    c["paths"] = {{"data_dir", dir + "/" + tag + "/data"}, {"run_dir", dir + "/" + tag + "/run"}};
    const std::string cfg_path = dir + "/" + tag + ".json";
    write_text_file(cfg_path, c.dump(1));
    const std::string base = "\"" + cli + "\" ";
    const std::string quiet = " > /dev/null 2>&1";
    if (std::system((base + "generate --config " + cfg_path + quiet).c_str()) != 0) return false;
    if (std::system((base + "train --config " + cfg_path + quiet).c_str()) != 0) return false;
    if (std::system((base + "eval --config " + cfg_path + " --latents" + quiet).c_str()) != 0) return false;
    return true;
  };

  bool pass = run_pipeline("a") && run_pipeline("b");
  std::string detail = pass ? "" : "pipeline command failed; ";
  if (pass) {
    for (const std::string f :
         {"history.csv", "rrmse_table.csv", "posterior_report.csv", "eval_report.json",
          "latents_sources.csv", "latents_theta_s2.csv"}) {
      const std::string a = read_text_file(dir + "/a/run/" + f);
      const std::string b = read_text_file(dir + "/b/run/" + f);
      if (a != b) {
        pass = false;
        detail += f + " differs; ";
      }
    }
    if (pass) detail = "history + eval metrics byte-identical across reruns";
  }
  report(11, "full-pipeline determinism", pass, detail);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: procal_acceptance <cli-binary> <work-dir>\n";
    return 64;
  }
  const std::string cli = argv[1];
  const std::string work = argv[2];
  fs::create_directories(work);

  try {
    criterion_1_closed_forms();
    criterion_2_masking_invariance();
    criterion_3_gradient_stop_and_fd();
    criterion_4_clamp_range();
    criterion_5_per_source_normalization();
    criterion_6_oracle();
    criteria_7_8_9_end_to_end();
    criterion_10_two_step_freeze();
    criterion_11_determinism(cli, work);
  } catch (const std::exception& e) {
    std::cerr << "acceptance suite aborted: " << e.what() << "\n";
    return 70;
  }

  std::printf("%s (%d failure%s)\n", g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED",
              g_failures, g_failures == 1 ? "" : "s");
  return g_failures;
}
