#include <math.h>
#include <stdio.h>
#include <string.h>

#include "maelab.h"

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: smoke <checkpoint>\n");
        return 2;
    }
    double img[3 * 16 * 16];
    for (int i = 0; i < 3 * 16 * 16; i++) {
        img[i] = 0.5 + 0.4 * sin(0.37 * i);
    }
    MaelabShape shape = {1, 3, 16, 16};
    double v = 0.0;
    if (maelab_psnr(img, img, shape, 1.0, &v) != MAELAB_STATUS_OK || v != 99.0) {
        fprintf(stderr, "psnr %f\n", v);
        return 1;
    }

    MaelabMae *mae = NULL;
    if (maelab_mae_load(argv[1], &mae) != MAELAB_STATUS_OK) {
        fprintf(stderr, "load: %s\n", maelab_last_error());
        return 1;
    }
    MaelabShape fshape;
    if (maelab_mae_encode(mae, img, shape, NULL, 0, &fshape) != MAELAB_STATUS_BUFFER_TOO_SMALL) {
        return 1;
    }
    double total = -1.0, base = -1.0, feature = -1.0;
    MaelabStatus s = maelab_total_loss(mae, img, img, shape, MAELAB_DISTANCE_L1, MAELAB_DISTANCE_L2, 1.0, 0, 0, 0,
                                       &total, &base, &feature);
    maelab_mae_free(mae);
    if (s != MAELAB_STATUS_OK || total != 0.0 || base != 0.0 || feature != 0.0) {
        return 1;
    }

    MaelabNiqe *niqe = NULL;
    if (maelab_niqe_load("/nonexistent/niqe.model", &niqe) != MAELAB_STATUS_IO || maelab_last_error() == NULL) {
        return 1;
    }
    printf("ok %zux%zux%zu %s\n", fshape.c, fshape.h, fshape.w, maelab_version());
    return 0;
}
