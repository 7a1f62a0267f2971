#include <math.h>
#include <stdio.h>
#include <string.h>

#include "isac.h"

int main(void) {
    IsacConfig *cfg = isac_config_new();
    double ct = 0.0, cd = 0.0;
    if (isac_crlb(cfg, 0.9273, 25.0, 1.0, &ct, &cd) != ISAC_STATUS_OK) return 1;
    if (!(ct > 0.0 && cd > 0.0)) return 2;
    if (isac_config_set(cfg, "no_such_key", "1") != ISAC_STATUS_INVALID_CONFIG) return 3;
    if (strlen(isac_last_error()) == 0) return 4;
    IsacModel *m = NULL;
    if (isac_model_load("/nonexistent/model.bin", &m) != ISAC_STATUS_IO || m != NULL) return 5;
    isac_config_free(cfg);
    printf("%.17g %.17g\n", ct, cd);
    return 0;
}
