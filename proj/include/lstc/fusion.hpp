#pragma once

#include "lstc/matrix.hpp"

namespace lstc {

struct ContextLogits {
    Matrix z_s;
    Matrix z_l;
};

struct BceResult {
    double loss = 0.0;
    Matrix grad_logits; // d(loss)/d(z_s + z_l)
};

struct Prediction {
    Matrix labels; // 0/1 indicators
    Matrix scores; // probabilities passed through
};

// C = sigmoid(Z_s + Z_l). Symmetric in its arguments.
Matrix fuse(const ContextLogits& z);

// Mean binary cross entropy over all N*c cells. Probabilities are clamped to
// [1e-12, 1 - 1e-12] before the logs; grad_logits is (p - y) / (N*c).
BceResult bce_loss(const Matrix& probs, const Matrix& labels);

Prediction predict(const Matrix& probs, double threshold = 0.5);

} // namespace lstc
