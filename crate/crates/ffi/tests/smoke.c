#include <stdio.h>
#include <string.h>
#include "rough_em.h"

int main(void) {
    RoughEmModel *m = NULL;
    if (rough_em_model_new("zero", NULL, &m) != ROUGH_EM_STATUS_OK) return 1;
    RoughEmConstants c;
    if (rough_em_constants(m, &c) != ROUGH_EM_STATUS_OK) return 2;
    if (c.lambda != 1.0 || c.lambda_min != 4.0) return 3;
    rough_em_model_free(m);
    if (rough_em_model_new("bogus", NULL, &m) != ROUGH_EM_STATUS_UNKNOWN_MODEL) return 4;
    char buf[128];
    rough_em_last_error(buf, sizeof buf);
    if (strstr(buf, "bogus") == NULL) return 5;
    printf("ok %s\n", rough_em_version());
    return 0;
}
