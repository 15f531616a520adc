#include <stdio.h>
#include <string.h>

#include "plan_harvest.h"

#define CHECK(cond)                                                    \
  do {                                                                 \
    if (!(cond)) {                                                     \
      const char *msg = ph_last_error_message();                       \
      fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,           \
              msg ? msg : "no error");                                 \
      return 1;                                                        \
    }                                                                  \
  } while (0)

int main(int argc, char **argv) {
  CHECK(argc == 2);
  PhCorpus *corpus = NULL;
  CHECK(ph_corpus_load(argv[1], "WHS", &corpus) == PH_STATUS_OK);
  CHECK(ph_corpus_len(corpus) == 6);

  PhPlan *plan = NULL;
  CHECK(ph_plan_parse("click(start) open(control panel) double-click(internet options)", &plan) ==
        PH_STATUS_OK);
  PhScore score;
  CHECK(ph_score_text(corpus, "whs-01", plan, false, &score) == PH_STATUS_OK);
  CHECK(score.name_total_right == 3 && score.name_f1 == 1.0);

  char *prompt = NULL;
  size_t tokens = 0;
  CHECK(ph_prompt_render(corpus, "whs-01", 2, 0, PH_CAP_DATASET_DEFAULT, &prompt, &tokens) ==
        PH_STATUS_OK);
  CHECK(strncmp(prompt, "TEXT\n\n", 6) == 0 && tokens > 0);
  ph_string_free(prompt);

  CHECK(ph_score_text(corpus, "missing", plan, false, &score) == PH_STATUS_NOT_FOUND);
  CHECK(ph_last_error_message() != NULL);

  ph_plan_free(plan);
  ph_corpus_free(corpus);
  printf("ok %s\n", ph_version());
  return 0;
}
