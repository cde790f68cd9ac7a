#include <math.h>
#include <stdio.h>
#include <string.h>

#include "preqmdl.h"

#define CHECK(cond)                                                        \
  do {                                                                     \
    if (!(cond)) {                                                         \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond,       \
              pq_last_error());                                            \
      return 1;                                                            \
    }                                                                      \
  } while (0)

int main(void) {
  PqConfig *cfg = NULL;
  PqDataset *data = NULL;
  PqResult *res = NULL;
  const size_t keep[] = {0, 1, 2};
  double dl = 0.0, p = 0.0, comp = 0.0;
  double losses[100];
  size_t n = 0, dim = 0, classes = 0, written = 0;

  CHECK(strlen(pq_version()) > 0);
  CHECK(pq_config_parse("protocol = nonsense\n", &cfg) == PQ_STATUS_CONFIG);
  CHECK(strstr(pq_last_error(), "line 1") != NULL);
  CHECK(cfg == NULL);

  CHECK(pq_config_parse("protocol = mi_rs\nsynthetic = channel\ninit = zeros\nlr = 0\n", &cfg) == PQ_STATUS_OK);
  CHECK(pq_dataset_generate_channel(100, 3, 10, 2, 1.0, 4, keep, 3, &data) == PQ_STATUS_OK);
  CHECK(pq_dataset_shape(data, &n, &dim, &classes) == PQ_STATUS_OK);
  CHECK(n == 100 && dim == 6 && classes == 10);
  CHECK(pq_run(cfg, data, &res) == PQ_STATUS_OK);
  CHECK(pq_result_description_length(res, &dl) == PQ_STATUS_OK);
  CHECK(fabs(dl - 100.0 * log(10.0)) < 1e-6);
  CHECK(pq_result_step_losses(res, losses, 10, &written) == PQ_STATUS_BUFFER_TOO_SMALL);
  CHECK(written == 100);
  CHECK(pq_result_step_losses(res, losses, 100, &written) == PQ_STATUS_OK);
  CHECK(fabs(losses[99] - log(10.0)) < 1e-12);

  CHECK(pq_reset_probability(PQ_REPLAY_KIND_UNIFORM, 0, 0, 9, 10, &p) == PQ_STATUS_OK);
  CHECK(p == 0.1);
  CHECK(pq_nml_complexity(2, &comp) == PQ_STATUS_OK);
  CHECK(fabs(comp - log(2.5)) < 1e-12);
  CHECK(pq_run(NULL, data, &res) == PQ_STATUS_NULL_POINTER);

  pq_result_free(res);
  pq_dataset_free(data);
  pq_config_free(cfg);
  printf("ok\n");
  return 0;
}
