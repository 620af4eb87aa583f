#include <math.h>
#include <stdio.h>
#include "tiltbound.h"

int main(void) {
    TbSource *src = NULL;
    if (tb_source_from_json("{\"kind\":\"rademacher\"}", &src) != TB_STATUS_OK) return 1;
    double v = 0.0;
    if (tb_log_mgf(src, 1.0, &v) != TB_STATUS_OK) return 2;
    if (fabs(v - log(cosh(1.0))) > 1e-12) return 3;
    double grid[] = {0.5, 1.0, 2.0, 4.0};
    double norm = 0.0;
    if (tb_bphi_norm_phi2(src, grid, 4, &norm) != TB_STATUS_OK) return 4;
    if (norm > 1.0 + 1e-12) return 5;
    if (tb_log_mgf(NULL, 1.0, &v) != TB_STATUS_NULL_POINTER) return 6;
    if (tb_last_error_message() == NULL) return 7;
    tb_source_free(src);
    printf("ok %s\n", tb_version());
    return 0;
}
