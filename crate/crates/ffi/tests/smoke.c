#include <math.h>
#include <stdio.h>
#include <string.h>

#include "octic.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,   \
                    #cond, octic_last_error() ? octic_last_error() : ""); \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    double x[16], y[16], z[16];
    for (int i = 0; i < 16; i++) x[i] = sin(i + 1.0);
    CHECK(octic_fourier_forward(x, y, 2) == OCTIC_STATUS_OK);
    CHECK(octic_fourier_inverse(y, z, 2) == OCTIC_STATUS_OK);
    for (int i = 0; i < 16; i++) CHECK(fabs(x[i] - z[i]) < 1e-14);

    OcticModel *model = NULL;
    CHECK(octic_model_new("model.family = d8", &model) == OCTIC_STATUS_OK);
    size_t side = 0, classes = 0;
    CHECK(octic_model_shape(model, &side, &classes) == OCTIC_STATUS_OK);
    double pixels[3 * 16 * 16];
    double logits[8];
    CHECK(side == 16 && classes == 8);
    for (size_t i = 0; i < 3 * side * side; i++) pixels[i] = (double)(i % 7) / 7.0;
    CHECK(octic_model_forward(model, pixels, 3 * side * side, logits, classes) == OCTIC_STATUS_OK);
    CHECK(octic_model_forward(model, pixels, 5, logits, classes) == OCTIC_STATUS_DIMENSION_MISMATCH);
    CHECK(strstr(octic_last_error(), "pixels") != NULL);
    octic_model_free(model);

    CHECK(octic_model_new("model.colour = red", &model) == OCTIC_STATUS_INVALID_ARGUMENT);
    CHECK(octic_model_new(NULL, &model) == OCTIC_STATUS_NULL_POINTER);

    double c = 0.0;
    CHECK(octic_intensity_crossover(196.0, 2.0, 4.0, 256.0, 8192.0, &c) == OCTIC_STATUS_OK);
    CHECK(c > 3000.0 && c < 3400.0);
    printf("ok %s\n", octic_version());
    return 0;
}
