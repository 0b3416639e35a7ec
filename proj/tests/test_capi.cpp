// Exercises the shared-library C interface through tmld/tmld.h alone.

#include <math.h>
#include <stdio.h>
#include <string.h>

#include "tmld/tmld.h"

static int g_failures = 0;

#define EXPECT(cond, label)                                    \
  do {                                                         \
    if (!(cond)) {                                             \
      printf("FAIL %s (%s:%d)\n", label, __FILE__, __LINE__);  \
      ++g_failures;                                            \
    }                                                          \
  } while (0)

static int close_to(double a, double b, double tol) { return fabs(a - b) <= tol; }

int main(void) {
  /* target creation and evaluation */
  tmld_target* banana = NULL;
  EXPECT(tmld_target_create("{\"name\":\"banana\",\"s\":4.0,\"b\":0.01}", &banana) == TMLD_OK,
         "create banana");
  EXPECT(tmld_target_dim(banana) == 2, "banana dim");
  double y[2] = {0.0, 1.0}, out = 1.0;
  EXPECT(tmld_target_log_density(banana, y, &out) == TMLD_OK, "log density status");
  EXPECT(close_to(out, 0.0, 1e-14), "log density value");
  double grad[2];
  EXPECT(tmld_target_grad_log_density(banana, y, grad) == TMLD_OK, "grad status");
  EXPECT(close_to(grad[0], 0.0, 1e-14) && close_to(grad[1], 0.0, 1e-14), "grad at mode");

  /* bad config reports an invalid status and a message */
  tmld_target* bad = NULL;
  EXPECT(tmld_target_create("{\"name\":\"banana\",\"wat\":1}", &bad) == TMLD_ERR_INVALID, "bad config");
  EXPECT(strlen(tmld_last_error()) > 0, "error message set");

  /* exact map round trip */
  tmld_map* exact = NULL;
  EXPECT(tmld_target_has_exact_map(banana) == 1, "has exact map");
  EXPECT(tmld_target_exact_map(banana, &exact) == TMLD_OK, "exact map");
  double x[2], back[2];
  double y0[2] = {1.3, -0.4};
  EXPECT(tmld_map_forward(exact, y0, x) == TMLD_OK, "forward");
  EXPECT(tmld_map_inverse(exact, x, back) == TMLD_OK, "inverse");
  EXPECT(close_to(back[0], y0[0], 1e-10) && close_to(back[1], y0[1], 1e-10), "round trip");
  double J[4], ld, gld[2];
  EXPECT(tmld_map_jacobian(exact, y0, J) == TMLD_OK, "jacobian");
  EXPECT(tmld_map_log_det_jacobian(exact, y0, &ld) == TMLD_OK, "log det");
  EXPECT(tmld_map_grad_log_det(exact, y0, gld) == TMLD_OK, "grad log det");
  double score[2];
  EXPECT(tmld_pushforward_grad_log_density(banana, exact, x, score) == TMLD_OK, "pushforward grad");
  EXPECT(close_to(score[0], -x[0], 1e-8) && close_to(score[1], -x[1], 1e-8), "standard normal score");

  /* chains are deterministic in (config, seed) */
  double states_a[101 * 2], states_b[101 * 2];
  size_t rows_a = 0, rows_b = 0;
  long div_a = 0, div_b = 0;
  const char* scfg = "{\"scheme\":\"tmula\",\"h\":0.002}";
  double init[2] = {0.0, 1.0};
  EXPECT(tmld_run_chain(banana, scfg, exact, init, 100, 42, states_a, &rows_a, &div_a) == TMLD_OK,
         "run chain a");
  EXPECT(tmld_run_chain(banana, scfg, exact, init, 100, 42, states_b, &rows_b, &div_b) == TMLD_OK,
         "run chain b");
  EXPECT(rows_a == 101 && rows_b == 101, "chain rows");
  EXPECT(div_a == -1 && div_b == -1, "no divergence");
  EXPECT(memcmp(states_a, states_b, sizeof(states_a)) == 0, "bit-identical chains");

  /* diagnostics helpers */
  double phis[1000];
  for (int i = 0; i < 1000; ++i) phis[i] = states_a[(i % 101) * 2] ;
  double mean = 0, avar = 0;
  EXPECT(tmld_ergodic_average(phis, 1000, &mean) == TMLD_OK, "ergodic average");
  EXPECT(tmld_batch_means_avar(phis, 1000, &avar) == TMLD_OK, "batch means");
  EXPECT(avar >= 0.0, "avar nonnegative");

  double samples[400 * 2];
  EXPECT(tmld_target_sample_exact(banana, 7, 400, samples) == TMLD_OK, "exact sampling");
  double kv = 0;
  EXPECT(tmld_ksd(samples, 400, banana, 1.0, -0.5, 1, &kv) == TMLD_OK, "ksd");
  EXPECT(kv > 0.0, "ksd positive");

  double bound = 0;
  EXPECT(tmld_wasserstein_bound(1.0, 2.0, 0.2, 0, 3, 1.5, 1.0, &bound) == TMLD_OK, "bound");
  EXPECT(close_to(bound, 2 * 1.5 + 6.0, 1e-12), "bound k=0 value");
  EXPECT(tmld_wasserstein_bound(1.0, 2.0, 0.5, 0, 3, 1.5, 1.0, &bound) == TMLD_ERR_INVALID,
         "bound h range");

  double mean1[2] = {0, 0}, mean2[2] = {0, 0};
  double cov1[4] = {1, 0, 0, 4}, cov2[4] = {1, 0, 0, 1}, w2 = 0;
  EXPECT(tmld_gaussian_w2_squared(mean1, cov1, mean2, cov2, 2, &w2) == TMLD_OK, "w2");
  EXPECT(close_to(w2, 1.0, 1e-9), "w2 value");

  double r = 0, dr = 0;
  EXPECT(tmld_optimal_rate(1.0, 1.0, &r, &dr) == TMLD_OK, "rate");
  EXPECT(r == 0.75 && dr == 0.0, "rate values");

  double mc = 0, cf = 0, rel = 0;
  tmld_map* paper_map = NULL;
  EXPECT(tmld_map_from_json("{\"version\":\"1\",\"kind\":\"banana\",\"dim\":2,\"s\":4.0,\"b\":0.01}",
                            &paper_map) == TMLD_OK,
         "map from json");
  double yb[2] = {1.0, 1.2};
  EXPECT(tmld_onestep_discrepancy(banana, paper_map, yb, 1e-3, 50000, 3, &mc, &cf, &rel) == TMLD_OK,
         "onestep");
  EXPECT(close_to(cf, 0.2048e-6, 1e-12), "onestep closed form");

  /* training through the C surface */
  double train_data[200];
  tmld_target* gauss = NULL;
  EXPECT(tmld_target_create("{\"name\":\"anisotropic_gaussian\",\"m\":1.0,\"L\":1.0}", &gauss) == TMLD_OK,
         "gauss target");
  { /* one-dimensional samples from coordinate draws */
    double tmp[200 * 2];
    EXPECT(tmld_target_sample_exact(gauss, 11, 200, tmp) == TMLD_OK, "gauss samples");
    for (int i = 0; i < 200; ++i) train_data[i] = tmp[2 * i];
  }
  tmld_map* trained = NULL;
  char report[4096];
  EXPECT(tmld_train_map(train_data, 200, 1, 1, "softplus", 16, 1, &trained, report, sizeof(report)) ==
             TMLD_OK,
         "train map");
  EXPECT(strstr(report, "objective") != NULL, "training report");
  EXPECT(tmld_map_dim(trained) == 1, "trained dim");
  EXPECT(tmld_map_save(trained, "/tmp/tmld_capi_map.json") == TMLD_OK, "save map");
  tmld_map* loaded = NULL;
  EXPECT(tmld_map_load("/tmp/tmld_capi_map.json", &loaded) == TMLD_OK, "load map");
  double z = 0.7, fz1, fz2;
  EXPECT(tmld_map_forward(trained, &z, &fz1) == TMLD_OK, "trained forward");
  EXPECT(tmld_map_forward(loaded, &z, &fz2) == TMLD_OK, "loaded forward");
  EXPECT(fz1 == fz2, "save/load bit-exact");

  tmld_map_free(loaded);
  tmld_map_free(trained);
  tmld_map_free(paper_map);
  tmld_map_free(exact);
  tmld_target_free(gauss);
  tmld_target_free(banana);

  if (g_failures == 0) {
    printf("capi: all checks passed\n");
    return 0;
  }
  printf("capi: %d failures\n", g_failures);
  return 1;
}
