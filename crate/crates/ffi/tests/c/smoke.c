#include <math.h>
#include <stdio.h>
#include "uset.h"

int main(void) {
    UsetLoss *loss = NULL;
    if (uset_loss_new("tq", &loss) != USET_STATUS_OK) return 1;
    double v = 0.0;
    uset_loss_eval(loss, 1.0, &v);
    if (fabs(v - 4.0) > 1e-12) return 2;
    uset_loss_conjugate(loss, -0.5, &v);
    if (!isinf(v)) return 3;

    double x[8] = {1.0, 1.0, 2.0, 1.5, -1.0, -1.0, -2.0, -0.5};
    int32_t y[4] = {1, 1, -1, -1};
    UsetModel *model = NULL;
    if (uset_train(x, y, 4, 2, loss, 1.0, 0.0, &model) != USET_STATUS_OK) {
        fprintf(stderr, "%s\n", uset_last_error());
        return 4;
    }
    int32_t labels[4];
    uset_model_predict(model, x, 4, 2, labels);
    for (int i = 0; i < 4; i++)
        if (labels[i] != y[i]) return 5;

    if (uset_loss_new("nope", &loss) != USET_STATUS_INVALID_ARGUMENT) return 6;
    if (uset_last_error() == NULL) return 7;

    uset_model_free(model);
    uset_loss_free(loss);
    puts("ok");
    return 0;
}
