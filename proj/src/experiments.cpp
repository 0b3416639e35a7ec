#include "experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <filesystem>

#include "diagnostics.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "map_learning.hpp"
#include "rng.hpp"
#include "samplers.hpp"
#include "svg.hpp"
#include "targets.hpp"
#include "theory_checks.hpp"
#include "transport.hpp"
#include "util.hpp"

namespace tmld {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

namespace fs = std::filesystem;

// Funnel dataset parameters. The data-generating scale is small so the
// posterior actually has the narrow neck (gamma well below zero) that the
// experiment is about; see data/funnel_data.csv for the shipped values.
constexpr int kFunnelDataN = 34;
constexpr double kFunnelDataSigma = 0.049;
constexpr uint64_t kFunnelDataSeed = 20240601;

la::Mat canonical_skew(int d, double delta) {
  la::Mat D(d, d);
  if (d == 2) {
    D(0, 1) = delta;
    D(1, 0) = -delta;
  } else {
    // banded rotation pairs
    for (int i = 0; i + 1 < d; i += 2) {
      D(i, i + 1) = delta;
      D(i + 1, i) = -delta;
    }
  }
  return D;
}

std::vector<double> thin_rows(const std::vector<double>& rows, size_t n, int d, size_t target_count) {
  if (n <= target_count) return rows;
  std::vector<double> out;
  out.reserve(target_count * d);
  double stride = static_cast<double>(n) / static_cast<double>(target_count);
  for (size_t i = 0; i < target_count; ++i) {
    size_t r = static_cast<size_t>(i * stride);
    for (int j = 0; j < d; ++j) out.push_back(rows[r * d + j]);
  }
  return out;
}

struct OutputDir {
  fs::path root;
  explicit OutputDir(const std::string& dir) : root(dir) { io::ensure_dir(dir); }
  std::string path(const std::string& rel) const { return (root / rel).string(); }
};

void write_table_csv(const OutputDir& out, const std::string& rel, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows) {
  std::vector<double> flat;
  flat.reserve(rows.size() * header.size());
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  io::write_csv(out.path(rel), header, flat.data(), rows.size(), header.size());
}

// ---- banana bias sweep --------------------------------------------------------------

void run_banana_bias(const ExperimentOptions& opts) {
  OutputDir out(opts.out_dir);
  const double s = 4.0, b = 0.01;
  TargetPtr target = banana(s, b);
  MapPtr map = banana_map(s, b);
  TestFunction phi = test_function("banana_poly", 2);
  const double T = opts.desk_scale ? 1e5 : 1e6;
  std::vector<double> h_list = {4e-3, 2e-3, 1e-3};
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<double> y0 = {0.0, 1.0};
  double truth = target->reference_expectation(phi.eval, 0, 0);

  ordered_json cfg;
  cfg["preset"] = "banana-bias";
  cfg["target"] = target->params();
  cfg["map"] = map->to_json();
  cfg["phi"] = phi.name;
  cfg["h_list"] = h_list;
  cfg["time_horizon"] = T;
  cfg["seeds"] = seeds;
  cfg["y0"] = y0;
  cfg["desk_scale"] = opts.desk_scale;
  cfg["master_seed"] = opts.seed;
  cfg["truth"] = truth;
  io::write_json(out.path("resolved_config.json"), cfg);

  struct Task {
    Scheme scheme;
    uint64_t seed;
    BiasSweepResult result;
  };
  std::vector<Task> tasks;
  for (Scheme sc : {Scheme::tmula, Scheme::emrmld})
    for (uint64_t sd : seeds) tasks.push_back({sc, sd, {}});

  unsigned jobs = opts.jobs ? opts.jobs : default_jobs();
  parallel_for(tasks.size(), jobs, [&](size_t i) {
    SamplerConfig sc;
    sc.scheme = tasks[i].scheme;
    sc.map = map;
    tasks[i].result =
        bias_sweep(*target, sc, phi, truth, h_list, T, y0, rng::mix(opts.seed, tasks[i].seed), 0.1, 1);
  });

  std::vector<std::vector<double>> rows;
  ordered_json lam = ordered_json::object();
  for (const auto& t : tasks) {
    for (const auto& r : t.result.rows)
      rows.push_back({double(t.scheme == Scheme::tmula ? 0 : 1), double(t.seed), r.h, double(r.steps),
                      r.estimate, r.e_hat, r.e_over_h, r.avar, double(r.diverged)});
    lam[to_string(t.scheme)][std::to_string(t.seed)] = t.result.lambda1_hat;
  }
  write_table_csv(out, "bias_sweep.csv",
                  {"scheme_id", "seed", "h", "steps", "estimate", "e_hat", "e_over_h", "avar", "diverged"},
                  rows);

  ordered_json report;
  report["experiment"] = "banana-bias";
  report["desk_scale"] = opts.desk_scale;
  report["truth"] = truth;
  report["lambda1_hat"] = lam;
  for (Scheme sc : {Scheme::tmula, Scheme::emrmld}) {
    double mean = 0;
    int n = 0;
    for (const auto& t : tasks)
      if (t.scheme == sc) {
        mean += t.result.lambda1_hat;
        ++n;
      }
    report["lambda1_mean"][to_string(sc)] = mean / n;
  }
  io::write_json(out.path("report.json"), report);

  if (opts.svg) {
    std::vector<SvgSeries> abs_e, eoh;
    for (Scheme sc : {Scheme::tmula, Scheme::emrmld}) {
      SvgSeries se{to_string(sc), {}, {}, false}, sr{to_string(sc), {}, {}, false};
      for (double h : h_list) {
        double me = 0, mr = 0;
        int n = 0;
        for (const auto& t : tasks)
          if (t.scheme == sc)
            for (const auto& r : t.result.rows)
              if (r.h == h && !r.diverged) {
                me += std::fabs(r.e_hat);
                mr += r.e_over_h;
                ++n;
              }
        if (n) {
          se.x.push_back(h);
          se.y.push_back(me / n);
          sr.x.push_back(h);
          sr.y.push_back(mr / n);
        }
      }
      abs_e.push_back(se);
      eoh.push_back(sr);
    }
    write_svg_plot(out.path("bias_abs_vs_h.svg"), {"`|e(phi,h)|` vs h", "h", "|e|", true, true}, abs_e);
    write_svg_plot(out.path("bias_slope_vs_h.svg"), {"e(phi,h)/h vs h", "h", "e/h", true, false}, eoh);
  }
  write_manifest(opts.out_dir);
}

// ---- funnel -------------------------------------------------------------------------

struct FunnelSetup {
  TargetPtr target;
  MapPtr trained_map;
  std::vector<ComponentTrainingReport> reports;
  std::vector<double> training_samples;
};

FunnelSetup funnel_setup(const ExperimentOptions& opts, const OutputDir* out) {
  FunnelSetup fsu;
  std::vector<double> data = funnel_dataset();
  fsu.target = funnel_posterior(data);
  // training run: small-step ULA so the chain resolves the neck
  double xbar = 0;
  for (double v : data) xbar += v;
  xbar /= data.size();
  double sd = 0;
  for (double v : data) sd += (v - xbar) * (v - xbar);
  sd = std::sqrt(sd / (data.size() - 1));
  std::vector<double> y0 = {xbar, std::log(sd)};
  const double h_train = 1e-6;
  const size_t K_train = 2000000, n_train = 20000;
  const size_t burn = K_train / 10;
  SamplerConfig cfg;
  cfg.scheme = Scheme::ula;
  cfg.h = h_train;
  std::vector<double> kept;
  kept.reserve((K_train - burn) * 2);
  auto div = run_chain_streaming(*fsu.target, cfg, y0, K_train, rng::mix(opts.seed, 0x7a11), 0,
                                 [&](size_t k, const double* y) {
                                   if (k > burn) kept.insert(kept.end(), y, y + 2);
                                 });
  if (div) throw NumericsError("funnel training chain diverged");
  fsu.training_samples = thin_rows(kept, kept.size() / 2, 2, n_train);

  MapTrainingSpec spec;
  spec.total_order = 3;
  spec.rectifier = Rectifier::softplus;
  spec.quadrature_points = 32;
  spec.standardize = true;
  TrainedMap tm = train_map(fsu.training_samples.data(), n_train, 2, spec, opts.jobs);
  fsu.trained_map = tm.map;
  fsu.reports = tm.reports;

  if (out) {
    io::write_csv(out->path("funnel_data.csv"), {"x"}, data.data(), data.size(), 1);
    io::write_csv(out->path("training_samples.csv"), {"mu", "gamma"}, fsu.training_samples.data(), n_train,
                  2);
    save_map(*fsu.trained_map, out->path("trained_map.json"));
    ordered_json tr = ordered_json::array();
    for (const auto& r : tm.reports)
      tr.push_back({{"component", r.component},
                    {"objective", r.objective},
                    {"grad_norm", r.grad_norm},
                    {"iterations", r.iterations},
                    {"converged", r.converged}});
    io::write_json(out->path("training_report.json"), tr);
  }
  return fsu;
}

void run_funnel(const ExperimentOptions& opts) {
  OutputDir out(opts.out_dir);
  FunnelSetup fsu = funnel_setup(opts, &out);
  const Target& target = *fsu.target;
  const double h = 8e-3;
  const size_t K = 12500;
  const size_t burn = K / 5;
  const size_t ksd_points = 10000;
  const int n_seeds = opts.desk_scale ? 10 : 100;
  unsigned jobs = opts.jobs ? opts.jobs : default_jobs();

  std::vector<double> data = funnel_dataset();
  double xbar = 0, sd = 0;
  for (double v : data) xbar += v;
  xbar /= data.size();
  for (double v : data) sd += (v - xbar) * (v - xbar);
  sd = std::sqrt(sd / (data.size() - 1.0));
  // start both schemes two marginal standard deviations up the funnel: inside
  // the trained region, but far enough out that slow mixers show it
  double gamma_sd = 1.0 / std::sqrt(2.0 * (data.size() - 1.0 - 0.75));
  std::vector<double> y0 = {xbar, std::log(sd) + 2.0 * gamma_sd};

  std::vector<std::pair<std::string, SamplerConfig>> schemes;
  {
    SamplerConfig c;
    c.scheme = Scheme::ula;
    c.h = h;
    schemes.emplace_back("ula", c);
    c = SamplerConfig{};
    c.scheme = Scheme::rmld;
    c.h = h;
    c.metric = funnel_gc_metric(data.size(), 0.5);
    schemes.emplace_back("rmld", c);
    c = SamplerConfig{};
    c.scheme = Scheme::tmula;
    c.h = h;
    c.map = fsu.trained_map;
    schemes.emplace_back("tmula", c);
    c = SamplerConfig{};
    c.scheme = Scheme::emrmld;
    c.h = h;
    c.map = fsu.trained_map;
    schemes.emplace_back("tmrmld", c);
    c = SamplerConfig{};
    c.scheme = Scheme::tmula_irr;
    c.h = h;
    c.map = fsu.trained_map;
    c.skew = canonical_skew(2, 1.0);
    schemes.emplace_back("tmula_irr", c);
  }

  ordered_json cfg;
  cfg["preset"] = "funnel";
  cfg["target"] = target.params();
  cfg["h"] = h;
  cfg["steps"] = K;
  cfg["burn_in"] = burn;
  cfg["n_seeds"] = n_seeds;
  cfg["ksd_points"] = ksd_points;
  cfg["master_seed"] = opts.seed;
  cfg["desk_scale"] = opts.desk_scale;
  cfg["data_n"] = data.size();
  io::write_json(out.path("resolved_config.json"), cfg);

  // per scheme, per seed: retained samples -> KSD + gamma<-1 fraction
  struct Cell {
    double ksd = std::numeric_limits<double>::quiet_NaN();
    double frac_below = 0;
    bool diverged = false;
  };
  std::vector<std::vector<Cell>> cells(schemes.size(), std::vector<Cell>(n_seeds));
  std::vector<double> first_seed_samples[2];  // ula, tmula scatter for the report

  for (size_t si = 0; si < schemes.size(); ++si) {
    parallel_for(static_cast<size_t>(n_seeds), jobs, [&, si](size_t sd) {
      std::vector<double> kept;
      kept.reserve((K - burn) * 2);
      auto div = run_chain_streaming(target, schemes[si].second, y0, K, rng::mix(opts.seed, 100 + sd),
                                     si, [&](size_t k, const double* y) {
                                       if (k > burn) kept.insert(kept.end(), y, y + 2);
                                     });
      Cell& cell = cells[si][sd];
      cell.diverged = div.has_value();
      size_t n = kept.size() / 2;
      if (n == 0) return;
      size_t below = 0;
      for (size_t i = 0; i < n; ++i)
        if (kept[i * 2 + 1] < -1.0) ++below;
      cell.frac_below = static_cast<double>(below) / static_cast<double>(n);
      if (!cell.diverged) {
        std::vector<double> pts = thin_rows(kept, n, 2, ksd_points);
        cell.ksd = ksd(pts.data(), pts.size() / 2, target, KsdKernel{}, 1);
      }
      if (sd == 0 && (schemes[si].first == "ula" || schemes[si].first == "tmula"))
        first_seed_samples[schemes[si].first == "ula" ? 0 : 1] = thin_rows(kept, n, 2, 4000);
    });
  }

  std::vector<std::vector<double>> ksd_rows;
  ordered_json jksd = ordered_json::object(), jfrac = ordered_json::object();
  for (size_t si = 0; si < schemes.size(); ++si) {
    std::vector<double> ks;
    ordered_json per_seed = ordered_json::array(), per_frac = ordered_json::array();
    for (int sd = 0; sd < n_seeds; ++sd) {
      const Cell& cell = cells[si][sd];
      ksd_rows.push_back({double(si), double(sd), cell.ksd, cell.frac_below, double(cell.diverged)});
      per_seed.push_back(cell.ksd);
      per_frac.push_back(cell.frac_below);
      if (std::isfinite(cell.ksd)) ks.push_back(cell.ksd);
    }
    std::sort(ks.begin(), ks.end());
    double median = ks.empty() ? std::numeric_limits<double>::quiet_NaN()
                               : (ks.size() % 2 ? ks[ks.size() / 2]
                                                : 0.5 * (ks[ks.size() / 2 - 1] + ks[ks.size() / 2]));
    jksd[schemes[si].first] = {{"per_seed", per_seed}, {"median", median}};
    jfrac[schemes[si].first] = per_frac;
  }
  write_table_csv(out, "ksd_table.csv", {"scheme_id", "seed", "ksd", "frac_gamma_below_m1", "diverged"},
                  ksd_rows);
  if (!first_seed_samples[0].empty())
    io::write_csv(out.path("samples_ula_seed0.csv"), {"mu", "gamma"}, first_seed_samples[0].data(),
                  first_seed_samples[0].size() / 2, 2);
  if (!first_seed_samples[1].empty())
    io::write_csv(out.path("samples_tmula_seed0.csv"), {"mu", "gamma"}, first_seed_samples[1].data(),
                  first_seed_samples[1].size() / 2, 2);

  // asymptotic variance and MSE study on the three observables
  ordered_json javar = ordered_json::object();
  ordered_json jmse = ordered_json::object();
  int n_chains = opts.desk_scale ? 20 : 100;
  for (const char* phi_name : {"exp_gamma", "mu_plus_gamma", "mu2_plus_gamma2"}) {
    TestFunction phi = test_function(phi_name, 2);
    double truth = target.reference_expectation(phi.eval, 0, 0);
    MseStudy st = mse_study(target, schemes, phi, truth, n_chains, K, y0, rng::mix(opts.seed, 0xa5a5), 0.2,
                            jobs);
    ordered_json ja = ordered_json::object(), jm = ordered_json::object();
    for (const auto& c : st.configs) {
      ja[c.label] = {{"avar_mean", c.avar_mean}, {"avar_std", c.avar_std}, {"diverged", c.n_diverged}};
      ordered_json curve = ordered_json::array();
      for (const auto& p : c.curve)
        curve.push_back({{"length", p.length}, {"bias", p.bias}, {"variance", p.variance}, {"mse", p.mse}});
      jm[c.label] = curve;
    }
    javar[phi_name] = {{"truth", truth}, {"schemes", ja}};
    jmse[phi_name] = jm;
  }

  ordered_json report;
  report["experiment"] = "funnel";
  report["desk_scale"] = opts.desk_scale;
  report["ksd"] = jksd;
  report["gamma_below_minus1_fraction"] = jfrac;
  report["avar"] = javar;
  report["mse"] = jmse;
  ordered_json tr = ordered_json::array();
  for (const auto& r : fsu.reports)
    tr.push_back({{"component", r.component},
                  {"objective", r.objective},
                  {"grad_norm", r.grad_norm},
                  {"iterations", r.iterations},
                  {"converged", r.converged}});
  report["training"] = tr;
  io::write_json(out.path("report.json"), report);

  if (opts.svg) {
    std::vector<SvgSeries> sc;
    if (!first_seed_samples[0].empty()) {
      SvgSeries a{"ula", {}, {}, true};
      for (size_t i = 0; i < first_seed_samples[0].size() / 2; ++i) {
        a.x.push_back(first_seed_samples[0][2 * i]);
        a.y.push_back(first_seed_samples[0][2 * i + 1]);
      }
      sc.push_back(a);
    }
    if (!first_seed_samples[1].empty()) {
      SvgSeries a{"tmula", {}, {}, true};
      for (size_t i = 0; i < first_seed_samples[1].size() / 2; ++i) {
        a.x.push_back(first_seed_samples[1][2 * i]);
        a.y.push_back(first_seed_samples[1][2 * i + 1]);
      }
      sc.push_back(a);
    }
    write_svg_plot(out.path("samples_scatter.svg"), {"funnel samples (seed 0)", "mu", "gamma"}, sc);
    // MSE curves for the first observable
    std::vector<SvgSeries> ms;
    for (const auto& c : jmse["exp_gamma"].items()) {
      SvgSeries ser{c.key(), {}, {}, false};
      for (const auto& p : c.value()) {
        ser.x.push_back(p["length"].get<double>());
        ser.y.push_back(p["mse"].get<double>());
      }
      ms.push_back(ser);
    }
    write_svg_plot(out.path("mse_exp_gamma.svg"), {"MSE vs length: exp(gamma)", "length", "mse", true, true},
                   ms);
  }
  write_manifest(opts.out_dir);
}

// ---- hybrid Rosenbrock ---------------------------------------------------------------

void run_rosenbrock(const ExperimentOptions& opts) {
  OutputDir out(opts.out_dir);
  la::Mat b(2, 3);
  std::fill(b.a.begin(), b.a.end(), 20.0);
  TargetPtr target = hybrid_rosenbrock(4, 2, 1.0, 30.0, b);
  MapPtr exact = target->exact_map();
  int d = target->dim();
  std::vector<double> y0(d, 1.0);
  const double h = 0.01;
  const size_t K_ula = 10000;
  const size_t K_impl = opts.desk_scale ? 100000 : 1000000;
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  unsigned jobs = opts.jobs ? opts.jobs : default_jobs();

  ordered_json cfg;
  cfg["preset"] = "rosenbrock";
  cfg["target"] = target->params();
  cfg["h"] = h;
  cfg["steps_explicit"] = K_ula;
  cfg["steps_implicit"] = K_impl;
  cfg["seeds"] = seeds;
  cfg["master_seed"] = opts.seed;
  cfg["desk_scale"] = opts.desk_scale;
  io::write_json(out.path("resolved_config.json"), cfg);

  // (a) explicit ULA transience
  ordered_json jdiv = ordered_json::array();
  for (uint64_t sd : seeds) {
    SamplerConfig c;
    c.scheme = Scheme::ula;
    c.h = h;
    Chain ch = run_chain(*target, c, y0, K_ula, rng::mix(opts.seed, sd), 0);
    jdiv.push_back({{"seed", sd},
                    {"diverged", ch.diverged_at.has_value()},
                    {"diverged_at", ch.diverged_at ? static_cast<long>(*ch.diverged_at) : -1}});
  }

  // (b) implicit schemes with the exact map: stability + asymptotic variance
  TestFunction phi1 = test_function("sum", d), phi2 = test_function("sum_sq", d);
  struct ImplRow {
    uint64_t seed;
    bool tm_diverged = false, u_diverged = false;
    double avar_tm_1 = 0, avar_u_1 = 0, avar_tm_2 = 0, avar_u_2 = 0;
  };
  std::vector<ImplRow> impl(seeds.size());
  parallel_for(seeds.size(), jobs, [&](size_t i) {
    ImplRow& row = impl[i];
    row.seed = seeds[i];
    for (int which = 0; which < 2; ++which) {
      SamplerConfig c;
      c.h = h;
      if (which == 0) {
        c.scheme = Scheme::tmuila;
        c.map = exact;
      } else {
        c.scheme = Scheme::uila;
      }
      std::vector<double> p1, p2;
      p1.reserve(K_impl);
      p2.reserve(K_impl);
      auto div = run_chain_streaming(*target, c, y0, K_impl, rng::mix(opts.seed, seeds[i]), 10 + which,
                                     [&](size_t k, const double* y) {
                                       if (k == 0) return;
                                       p1.push_back(phi1.eval(y));
                                       p2.push_back(phi2.eval(y));
                                     });
      bool diverged = div.has_value();
      double a1 = p1.size() >= 100 ? batch_means_avar(p1.data(), p1.size()) : 0;
      double a2 = p2.size() >= 100 ? batch_means_avar(p2.data(), p2.size()) : 0;
      if (which == 0) {
        row.tm_diverged = diverged;
        row.avar_tm_1 = a1;
        row.avar_tm_2 = a2;
      } else {
        row.u_diverged = diverged;
        row.avar_u_1 = a1;
        row.avar_u_2 = a2;
      }
    }
  });
  std::vector<std::vector<double>> impl_rows;
  for (const auto& r : impl)
    impl_rows.push_back({double(r.seed), double(r.tm_diverged), double(r.u_diverged), r.avar_tm_1,
                         r.avar_u_1, r.avar_tm_2, r.avar_u_2});
  write_table_csv(out, "implicit_avar.csv",
                  {"seed", "tmuila_diverged", "uila_diverged", "avar_tmuila_sum", "avar_uila_sum",
                   "avar_tmuila_sumsq", "avar_uila_sumsq"},
                  impl_rows);

  // (c) learned map (order 2 on 2500 exact samples) and KSD comparison
  const size_t n_train = 2500;
  std::vector<double> train(n_train * d);
  target->sample_exact(rng::mix(opts.seed, 0x7a0b), n_train, train.data());
  io::write_csv(out.path("training_samples.csv"),
                {"y_1", "y_2", "y_3", "y_4", "y_5", "y_6", "y_7"}, train.data(), n_train, d);
  MapTrainingSpec spec;
  spec.total_order = 2;
  spec.standardize = true;
  TrainedMap tm = train_map(train.data(), n_train, d, spec, jobs);
  save_map(*tm.map, out.path("trained_map.json"));
  double nll_trained = negative_log_likelihood(*tm.map, train.data(), n_train, d);
  double nll_identity = negative_log_likelihood(*make_identity(d), train.data(), n_train, d);

  const size_t K_ksd = 12500, burn_ksd = 2500, ksd_points = 10000;
  struct KsdRow {
    uint64_t seed;
    double tm = std::numeric_limits<double>::quiet_NaN();
    double u = std::numeric_limits<double>::quiet_NaN();
  };
  std::vector<KsdRow> ksd_rows(seeds.size());
  parallel_for(seeds.size(), jobs, [&](size_t i) {
    ksd_rows[i].seed = seeds[i];
    for (int which = 0; which < 2; ++which) {
      SamplerConfig c;
      c.h = h;
      if (which == 0) {
        c.scheme = Scheme::tmuila;
        c.map = tm.map;
      } else {
        c.scheme = Scheme::uila;
      }
      std::vector<double> kept;
      kept.reserve((K_ksd - burn_ksd) * d);
      auto div = run_chain_streaming(*target, c, y0, K_ksd, rng::mix(opts.seed, seeds[i]), 20 + which,
                                     [&](size_t k, const double* y) {
                                       if (k > burn_ksd) kept.insert(kept.end(), y, y + d);
                                     });
      if (div) continue;
      std::vector<double> pts = thin_rows(kept, kept.size() / d, d, ksd_points);
      double v = ksd(pts.data(), pts.size() / d, *target, KsdKernel{}, 1);
      (which == 0 ? ksd_rows[i].tm : ksd_rows[i].u) = v;
    }
  });
  std::vector<std::vector<double>> kr;
  for (const auto& r : ksd_rows) kr.push_back({double(r.seed), r.tm, r.u});
  write_table_csv(out, "ksd_table.csv", {"seed", "ksd_tmuila_trained", "ksd_uila"}, kr);

  ordered_json report;
  report["experiment"] = "rosenbrock";
  report["desk_scale"] = opts.desk_scale;
  report["ula_divergence"] = jdiv;
  report["nll"] = {{"trained_map", nll_trained}, {"identity_map", nll_identity}};
  ordered_json ja = ordered_json::array();
  for (const auto& r : impl)
    ja.push_back({{"seed", r.seed},
                  {"tmuila_diverged", r.tm_diverged},
                  {"uila_diverged", r.u_diverged},
                  {"avar_sum", {{"tmuila", r.avar_tm_1}, {"uila", r.avar_u_1}}},
                  {"avar_sum_sq", {{"tmuila", r.avar_tm_2}, {"uila", r.avar_u_2}}}});
  report["implicit_avar"] = ja;
  ordered_json jk = ordered_json::array();
  for (const auto& r : ksd_rows)
    jk.push_back({{"seed", r.seed}, {"ksd_tmuila_trained", r.tm}, {"ksd_uila", r.u}});
  report["ksd"] = jk;
  ordered_json trj = ordered_json::array();
  for (const auto& r : tm.reports)
    trj.push_back({{"component", r.component},
                   {"objective", r.objective},
                   {"grad_norm", r.grad_norm},
                   {"iterations", r.iterations},
                   {"converged", r.converged}});
  report["training"] = trj;
  io::write_json(out.path("report.json"), report);
  write_manifest(opts.out_dir);
}

// ---- Gaussian mixture -----------------------------------------------------------------

const std::vector<std::vector<double>>& mixture_means() {
  static const std::vector<std::vector<double>> means = {{-4, -4}, {4, -4}, {-4, 4}, {4, 4}};
  return means;
}

// Basis capacity from the sample budget (20 samples per coefficient, capped at
// total order 6): the richer training set earns the richer basis, like the
// adaptive construction it replaces.
int mixture_budget_order(size_t n) {
  int order = 1;
  for (int p = 2; p <= 6; ++p) {
    size_t ncoef = static_cast<size_t>((p + 1) * (p + 2) / 2);
    if (20 * ncoef <= n) order = p;
  }
  return order;
}

TargetPtr mixture_target() {
  return gaussian_mixture(mixture_means(), {}, {0.337, 0.050, 0.284, 0.328});
}

// minimum pushforward log-density along the straight segments joining the
// images of the modes: the depth of the separatrix walls
double mixture_segment_min(const Target& target, const Map& map) {
  const auto& means = mixture_means();
  double worst = std::numeric_limits<double>::infinity();
  std::vector<double> xi(2), xj(2), x(2);
  for (size_t i = 0; i < means.size(); ++i)
    for (size_t j = i + 1; j < means.size(); ++j) {
      map.forward(means[i].data(), xi.data());
      map.forward(means[j].data(), xj.data());
      for (int t = 0; t <= 400; ++t) {
        double f = t / 400.0;
        x[0] = (1 - f) * xi[0] + f * xj[0];
        x[1] = (1 - f) * xi[1] + f * xj[1];
        worst = std::min(worst, pushforward_log_density(target, map, x.data()));
      }
    }
  return worst;
}

void run_mixture(const ExperimentOptions& opts) {
  OutputDir out(opts.out_dir);
  TargetPtr target = mixture_target();
  const int n_pairs = 10;
  const size_t n_small = 200, n_large = 2000;
  unsigned jobs = opts.jobs ? opts.jobs : default_jobs();

  ordered_json cfg;
  cfg["preset"] = "mixture";
  cfg["target"] = target->params();
  cfg["n_small"] = n_small;
  cfg["n_large"] = n_large;
  cfg["n_pairs"] = n_pairs;
  cfg["total_order_small"] = mixture_budget_order(n_small);
  cfg["total_order_large"] = mixture_budget_order(n_large);
  cfg["master_seed"] = opts.seed;
  cfg["desk_scale"] = opts.desk_scale;
  io::write_json(out.path("resolved_config.json"), cfg);

  std::vector<SeparatrixPair> pairs(n_pairs);
  std::vector<MapPtr> first_maps(2);
  std::vector<double> first_samples_small, first_samples_large;
  parallel_for(static_cast<size_t>(n_pairs), jobs, [&](size_t p) {
    std::vector<double> samples(n_large * 2);
    target->sample_exact(rng::mix(opts.seed, p), n_large, samples.data());
    MapPtr map_small, map_large;
    for (int which = 0; which < 2; ++which) {
      size_t n = which == 0 ? n_small : n_large;
      MapTrainingSpec spec;
      spec.total_order = mixture_budget_order(n);
      spec.standardize = true;
      MapPtr m = train_map(samples.data(), n, 2, spec, 1).map;
      (which == 0 ? map_small : map_large) = m;
    }
    pairs[p].min_small = mixture_segment_min(*target, *map_small);
    pairs[p].min_large = mixture_segment_min(*target, *map_large);
    if (p == 0) {
      first_maps[0] = map_small;
      first_maps[1] = map_large;
      first_samples_small.assign(samples.begin(), samples.begin() + n_small * 2);
      first_samples_large = samples;
    }
  });

  // density grid + pushed samples for the first pair
  for (int which = 0; which < 2; ++which) {
    const Map& map = *first_maps[which];
    const char* tag = which == 0 ? "n200" : "n2000";
    const int ng = 161;
    std::vector<double> grid;
    grid.reserve(static_cast<size_t>(ng) * ng * 3);
    for (int iy = 0; iy < ng; ++iy)
      for (int ix = 0; ix < ng; ++ix) {
        double x0 = -4.0 + 8.0 * ix / (ng - 1);
        double x1 = -4.0 + 8.0 * iy / (ng - 1);
        double x[2] = {x0, x1};
        grid.push_back(x0);
        grid.push_back(x1);
        grid.push_back(pushforward_log_density(*target, map, x));
      }
    io::write_csv(out.path(std::string("pushforward_grid_") + tag + ".csv"), {"x1", "x2", "log_density"},
                  grid.data(), static_cast<size_t>(ng) * ng, 3);
    const std::vector<double>& samples = which == 0 ? first_samples_small : first_samples_large;
    std::vector<double> pushed(samples.size());
    for (size_t i = 0; i < samples.size() / 2; ++i)
      map.forward(&samples[2 * i], &pushed[2 * i]);
    io::write_csv(out.path(std::string("pushforward_samples_") + tag + ".csv"), {"x1", "x2"}, pushed.data(),
                  pushed.size() / 2, 2);
    if (opts.svg) {
      SvgSeries sc{"pushforward samples", {}, {}, true};
      for (size_t i = 0; i < pushed.size() / 2; ++i) {
        sc.x.push_back(pushed[2 * i]);
        sc.y.push_back(pushed[2 * i + 1]);
      }
      write_svg_plot(out.path(std::string("pushforward_samples_") + tag + ".svg"),
                     {std::string("pushforward samples, ") + tag, "x1", "x2"}, {sc});
    }
  }

  std::vector<std::vector<double>> rows;
  int n_improved = 0;
  for (int p = 0; p < n_pairs; ++p) {
    bool improved = pairs[p].min_large > pairs[p].min_small;
    n_improved += improved;
    rows.push_back({double(p), pairs[p].min_small, pairs[p].min_large, double(improved)});
  }
  write_table_csv(out, "separatrix_depth.csv",
                  {"pair", "min_logdensity_n200", "min_logdensity_n2000", "improved"}, rows);

  ordered_json report;
  report["experiment"] = "mixture";
  report["desk_scale"] = opts.desk_scale;
  report["n_pairs"] = n_pairs;
  report["pairs_improved"] = n_improved;
  ordered_json jp = ordered_json::array();
  for (const auto& r : pairs) jp.push_back({{"min_n200", r.min_small}, {"min_n2000", r.min_large}});
  report["separatrix_min_logdensity"] = jp;
  io::write_json(out.path("report.json"), report);
  write_manifest(opts.out_dir);
}

}  // namespace

std::vector<double> funnel_dataset() {
  rng::Stream stream(kFunnelDataSeed, 0xda7a);
  std::vector<double> data(kFunnelDataN);
  for (int i = 0; i < kFunnelDataN; ++i) data[i] = kFunnelDataSigma * stream.normal(i);
  return data;
}

FunnelTraining funnel_trained_map(uint64_t seed, unsigned jobs) {
  ExperimentOptions opts;
  opts.seed = seed;
  opts.jobs = jobs;
  FunnelSetup fsu = funnel_setup(opts, nullptr);
  return {fsu.target, fsu.trained_map};
}

std::vector<SeparatrixPair> mixture_separatrix_depths(uint64_t seed, int n_pairs, unsigned jobs) {
  TargetPtr target = mixture_target();
  std::vector<SeparatrixPair> pairs(n_pairs);
  if (jobs == 0) jobs = default_jobs();
  parallel_for(static_cast<size_t>(n_pairs), jobs, [&](size_t p) {
    // nested draws: the small training set is a prefix of the large one
    std::vector<double> samples(2000 * 2);
    target->sample_exact(rng::mix(seed, p), 2000, samples.data());
    for (int which = 0; which < 2; ++which) {
      size_t n = which == 0 ? 200 : 2000;
      MapTrainingSpec spec;
      spec.total_order = mixture_budget_order(n);
      spec.standardize = true;
      MapPtr m = train_map(samples.data(), n, 2, spec, 1).map;
      double v = mixture_segment_min(*target, *m);
      (which == 0 ? pairs[p].min_small : pairs[p].min_large) = v;
    }
  });
  return pairs;
}

void run_experiment(const std::string& name, const ExperimentOptions& opts) {
  if (opts.out_dir.empty()) throw InvalidParameterError("run_experiment: output directory required");
  if (name == "banana-bias")
    run_banana_bias(opts);
  else if (name == "funnel")
    run_funnel(opts);
  else if (name == "rosenbrock")
    run_rosenbrock(opts);
  else if (name == "mixture")
    run_mixture(opts);
  else
    throw InvalidParameterError("unknown experiment \"" + name + "\"");
}

void run_experiment_config(const json& config, ExperimentOptions opts) {
  if (!config.is_object() || !config.contains("preset"))
    throw SchemaError("experiment config: missing preset");
  for (auto it = config.begin(); it != config.end(); ++it) {
    std::string k = it.key();
    if (k != "preset" && k != "seed" && k != "desk_scale" && k != "svg" && k != "out_dir")
      throw SchemaError("experiment config: unknown key \"" + k + "\"");
  }
  if (config.contains("seed")) opts.seed = config["seed"].get<uint64_t>();
  if (config.contains("desk_scale")) opts.desk_scale = config["desk_scale"].get<bool>();
  if (config.contains("svg")) opts.svg = config["svg"].get<bool>();
  if (opts.out_dir.empty() && config.contains("out_dir")) opts.out_dir = config["out_dir"];
  run_experiment(config["preset"], opts);
}

void write_manifest(const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> rels;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string rel = fs::relative(entry.path(), out_dir).generic_string();
    if (rel == "MANIFEST") continue;
    rels.push_back(rel);
  }
  std::sort(rels.begin(), rels.end());
  std::string manifest;
  for (const auto& rel : rels)
    manifest += io::sha256_file((fs::path(out_dir) / rel).string()) + "  " + rel + "\n";
  io::write_file((fs::path(out_dir) / "MANIFEST").string(), manifest);
}

}  // namespace tmld
