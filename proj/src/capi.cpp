#include "tmld/tmld.h"

#include <cstdio>
#include <cstring>
#include <string>

#include "commands.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "experiments.hpp"
#include "io.hpp"
#include "map_learning.hpp"
#include "samplers.hpp"
#include "targets.hpp"
#include "theory_checks.hpp"
#include "transport.hpp"

namespace {

thread_local std::string g_last_error;

struct TargetHandle {
  tmld::TargetPtr ptr;
};
struct MapHandle {
  tmld::MapPtr ptr;
};

const tmld::Target& tgt(const tmld_target* t) { return *reinterpret_cast<const TargetHandle*>(t)->ptr; }
const tmld::Map& mp(const tmld_map* m) { return *reinterpret_cast<const MapHandle*>(m)->ptr; }

template <typename Fn>
tmld_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return TMLD_OK;
  } catch (const tmld::NumericsError& e) {
    g_last_error = e.what();
    return TMLD_ERR_NUMERIC;
  } catch (const tmld::InvalidParameterError& e) {
    g_last_error = e.what();
    return TMLD_ERR_INVALID;
  } catch (const tmld::IoError& e) {
    g_last_error = e.what();
    return TMLD_ERR_INVALID;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TMLD_ERR_RUNTIME;
  }
}

template <typename Fn>
int guarded_cmd(Fn&& fn) {
  try {
    fn();
    return 0;
  } catch (const tmld::NumericsError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const tmld::InvalidParameterError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const tmld::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

extern "C" {

const char* tmld_last_error(void) { return g_last_error.c_str(); }

tmld_status tmld_target_create(const char* json_cfg, tmld_target** out) {
  return guarded([&] {
    auto t = tmld::target_from_json(nlohmann::json::parse(json_cfg));
    *out = reinterpret_cast<tmld_target*>(new TargetHandle{std::move(t)});
  });
}

void tmld_target_free(tmld_target* t) { delete reinterpret_cast<TargetHandle*>(t); }

int tmld_target_dim(const tmld_target* t) { return tgt(t).dim(); }

tmld_status tmld_target_log_density(const tmld_target* t, const double* y, double* out) {
  return guarded([&] { *out = tgt(t).log_density(y); });
}

tmld_status tmld_target_grad_log_density(const tmld_target* t, const double* y, double* grad) {
  return guarded([&] { tgt(t).grad_log_density(y, grad); });
}

int tmld_target_has_exact_map(const tmld_target* t) { return tgt(t).exact_map() ? 1 : 0; }

tmld_status tmld_target_exact_map(const tmld_target* t, tmld_map** out) {
  return guarded([&] {
    auto m = tgt(t).exact_map();
    if (!m) throw tmld::InvalidParameterError("target has no exact map");
    *out = reinterpret_cast<tmld_map*>(new MapHandle{std::move(m)});
  });
}

tmld_status tmld_target_sample_exact(const tmld_target* t, uint64_t seed, size_t n, double* out) {
  return guarded([&] { tgt(t).sample_exact(seed, n, out); });
}

tmld_status tmld_map_load(const char* path, tmld_map** out) {
  return guarded([&] { *out = reinterpret_cast<tmld_map*>(new MapHandle{tmld::load_map(path)}); });
}

tmld_status tmld_map_from_json(const char* json_text, tmld_map** out) {
  return guarded([&] {
    *out = reinterpret_cast<tmld_map*>(new MapHandle{tmld::map_from_json(nlohmann::json::parse(json_text))});
  });
}

tmld_status tmld_map_save(const tmld_map* m, const char* path) {
  return guarded([&] { tmld::save_map(mp(m), path); });
}

void tmld_map_free(tmld_map* m) { delete reinterpret_cast<MapHandle*>(m); }

int tmld_map_dim(const tmld_map* m) { return mp(m).dim(); }

tmld_status tmld_map_forward(const tmld_map* m, const double* y, double* x) {
  return guarded([&] { mp(m).forward(y, x); });
}

tmld_status tmld_map_inverse(const tmld_map* m, const double* x, double* y) {
  return guarded([&] { mp(m).inverse(x, y); });
}

tmld_status tmld_map_jacobian(const tmld_map* m, const double* y, double* jac) {
  return guarded([&] { mp(m).jacobian(y, jac); });
}

tmld_status tmld_map_log_det_jacobian(const tmld_map* m, const double* y, double* out) {
  return guarded([&] { *out = mp(m).log_det_jacobian(y); });
}

tmld_status tmld_map_grad_log_det(const tmld_map* m, const double* y, double* out) {
  return guarded([&] { mp(m).grad_log_det(y, out); });
}

tmld_status tmld_pushforward_grad_log_density(const tmld_target* t, const tmld_map* m, const double* x,
                                              double* out) {
  return guarded([&] { tmld::pushforward_grad_log_density(tgt(t), mp(m), x, out); });
}

tmld_status tmld_train_map(const double* samples, size_t n, int d, int total_order, const char* rectifier,
                           int quadrature_points, int standardize, tmld_map** out, char* report_json,
                           size_t report_capacity) {
  return guarded([&] {
    tmld::MapTrainingSpec spec;
    spec.total_order = total_order;
    spec.rectifier = tmld::rectifier_from_string(rectifier);
    spec.quadrature_points = quadrature_points;
    spec.standardize = standardize != 0;
    tmld::TrainedMap tm = tmld::train_map(samples, n, d, spec);
    if (report_json && report_capacity > 0) {
      nlohmann::ordered_json rep = nlohmann::ordered_json::array();
      for (const auto& r : tm.reports)
        rep.push_back({{"component", r.component},
                       {"objective", r.objective},
                       {"grad_norm", r.grad_norm},
                       {"iterations", r.iterations},
                       {"converged", r.converged}});
      std::string text = rep.dump();
      std::strncpy(report_json, text.c_str(), report_capacity - 1);
      report_json[report_capacity - 1] = '\0';
    }
    *out = reinterpret_cast<tmld_map*>(new MapHandle{std::move(tm.map)});
  });
}

tmld_status tmld_run_chain(const tmld_target* t, const char* sampler_json, const tmld_map* map,
                           const double* y0, size_t K, uint64_t seed, double* states, size_t* rows_out,
                           long* diverged_at) {
  return guarded([&] {
    nlohmann::json cfg = nlohmann::json::parse(sampler_json);
    tmld::SamplerConfig sc;
    sc.scheme = tmld::scheme_from_string(cfg.at("scheme"));
    sc.h = cfg.at("h");
    if (map) sc.map = reinterpret_cast<const MapHandle*>(map)->ptr;
    if (cfg.contains("skew")) {
      auto rows = cfg["skew"].get<std::vector<std::vector<double>>>();
      int d = static_cast<int>(rows.size());
      tmld::la::Mat D(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) D(i, j) = rows[i][j];
      sc.skew = D;
    }
    if (cfg.contains("implicit_tol")) sc.implicit_solver.tol = cfg["implicit_tol"];
    if (cfg.contains("implicit_max_iters")) sc.implicit_solver.max_iters = cfg["implicit_max_iters"];
    int d = tgt(t).dim();
    std::vector<double> init(y0, y0 + d);
    tmld::Chain chain = tmld::run_chain(tgt(t), sc, init, K, seed, 0);
    std::copy(chain.states.begin(), chain.states.end(), states);
    *rows_out = chain.rows();
    *diverged_at = chain.diverged_at ? static_cast<long>(*chain.diverged_at) : -1;
  });
}

tmld_status tmld_ergodic_average(const double* phis, size_t n, double* out) {
  return guarded([&] { *out = tmld::ergodic_average(phis, n); });
}

tmld_status tmld_batch_means_avar(const double* phis, size_t n, double* out) {
  return guarded([&] { *out = tmld::batch_means_avar(phis, n); });
}

tmld_status tmld_ksd(const double* points, size_t n, const tmld_target* t, double kernel_c,
                     double kernel_beta, unsigned jobs, double* out) {
  return guarded([&] { *out = tmld::ksd(points, n, tgt(t), {kernel_c, kernel_beta}, jobs); });
}

tmld_status tmld_wasserstein_bound(double m, double L, double h, long k, int d, double dist0_sq, double rho,
                                   double* out) {
  return guarded([&] { *out = tmld::wasserstein_bound(m, L, h, k, d, dist0_sq, rho); });
}

tmld_status tmld_gaussian_w2_squared(const double* mean1, const double* cov1, const double* mean2,
                                     const double* cov2, int d, double* out) {
  return guarded([&] {
    std::vector<double> m1(mean1, mean1 + d), m2(mean2, mean2 + d);
    tmld::la::Mat c1(d, d, std::vector<double>(cov1, cov1 + d * d));
    tmld::la::Mat c2(d, d, std::vector<double>(cov2, cov2 + d * d));
    *out = tmld::gaussian_w2_squared(m1, c1, m2, c2);
  });
}

tmld_status tmld_optimal_rate(double m, double L, double* r, double* dr_dL) {
  return guarded([&] {
    tmld::OptimalRate res = tmld::optimal_rate(m, L);
    *r = res.r;
    *dr_dL = res.dr_dL;
  });
}

tmld_status tmld_onestep_discrepancy(const tmld_target* t, const tmld_map* m, const double* y, double h,
                                     size_t n_mc, uint64_t seed, double* mc_estimate, double* closed_form,
                                     double* rel_err) {
  return guarded([&] {
    int d = tgt(t).dim();
    std::vector<double> yv(y, y + d);
    tmld::OneStepDiscrepancy res = tmld::onestep_discrepancy(tgt(t), mp(m), yv, h, n_mc, seed);
    *mc_estimate = res.mc_estimate;
    *closed_form = res.closed_form;
    *rel_err = res.rel_err;
  });
}

int tmld_cmd_sample(const char* config_path, const char* out_path, unsigned jobs) {
  return guarded_cmd([&] { tmld::cmd::sample(config_path, out_path, jobs); });
}

int tmld_cmd_train_map(const char* samples_csv, int total_order, const char* out_path,
                       const char* rectifier, int quadrature_points, int standardize,
                       const char* report_path) {
  return guarded_cmd([&] {
    tmld::cmd::train_map_cmd(samples_csv, total_order, out_path, rectifier, quadrature_points,
                             standardize != 0, report_path ? report_path : "");
  });
}

int tmld_cmd_diagnose(const char* chains_dir, const char* target_cfg, const char* phi, size_t burn_in,
                      const char* out_path, size_t ksd_points, int svg, unsigned jobs) {
  return guarded_cmd(
      [&] { tmld::cmd::diagnose(chains_dir, target_cfg, phi, burn_in, out_path, ksd_points, svg != 0, jobs); });
}

int tmld_cmd_verify(const char* suite, const char* out_path, uint64_t seed, unsigned jobs) {
  int code = 0;
  int rc = guarded_cmd([&] {
    bool pass = tmld::cmd::verify(suite, out_path ? out_path : "", seed, jobs);
    code = pass ? 0 : 1;
  });
  return rc != 0 ? rc : code;
}

int tmld_cmd_run_experiment(const char* name_or_config, const char* out_dir, uint64_t seed, int desk_scale,
                            int svg, unsigned jobs) {
  return guarded_cmd([&] {
    tmld::ExperimentOptions opts;
    opts.out_dir = out_dir ? out_dir : "";
    opts.seed = seed;
    opts.desk_scale = desk_scale != 0;
    opts.svg = svg != 0;
    opts.jobs = jobs;
    std::string arg = name_or_config;
    if (arg.size() > 5 && arg.substr(arg.size() - 5) == ".json")
      tmld::run_experiment_config(tmld::io::read_json(arg), opts);
    else
      tmld::run_experiment(arg, opts);
  });
}

}  // extern "C"
