#include "lstc/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "lstc/errors.hpp"
#include "lstc/ops.hpp"

namespace lstc {

Matrix fuse(const ContextLogits& z) {
    if (!z.z_s.same_shape(z.z_l)) {
        throw DimensionError("fuse: logit shapes differ, " + z.z_s.shape_str() + " vs " +
                             z.z_l.shape_str());
    }
    return sigmoid(add(z.z_s, z.z_l));
}

BceResult bce_loss(const Matrix& probs, const Matrix& labels) {
    if (!probs.same_shape(labels)) {
        throw DimensionError("bce_loss: probs " + probs.shape_str() + " vs labels " +
                             labels.shape_str());
    }
    if (probs.rows() == 0 || probs.cols() == 0) {
        throw ConfigError("bce_loss: empty input (mean undefined)");
    }
    const double inv = 1.0 / static_cast<double>(probs.size());
    BceResult r;
    r.grad_logits = Matrix(probs.rows(), probs.cols());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double y = labels.data()[i];
        if (y != 0.0 && y != 1.0) throw ConfigError("bce_loss: labels must be 0 or 1");
        const double p = std::clamp(probs.data()[i], 1e-12, 1.0 - 1e-12);
        r.loss -= (y * std::log(p) + (1.0 - y) * std::log(1.0 - p)) * inv;
        r.grad_logits.data()[i] = (probs.data()[i] - y) * inv;
    }
    return r;
}

Prediction predict(const Matrix& probs, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ConfigError("predict: threshold must lie in (0,1)");
    }
    Prediction out;
    out.labels = Matrix(probs.rows(), probs.cols());
    out.scores = probs;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        out.labels.data()[i] = probs.data()[i] >= threshold ? 1.0 : 0.0;
    }
    return out;
}

} // namespace lstc
