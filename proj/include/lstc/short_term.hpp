#pragma once

#include <vector>

#include "lstc/box.hpp"
#include "lstc/ops.hpp"

namespace lstc {

struct GridDims {
    std::size_t h = 0, w = 0, t = 0;
    std::size_t cells() const { return h * w * t; }
    bool operator==(const GridDims&) const = default;
};

// Dense spatiotemporal feature map, one row per grid cell. Row index is
// t-major, then h, then w: row = (t * h + i) * w + j.
struct ClipFeatureMap {
    GridDims grid;
    std::size_t d = 0;
    Matrix x; // cells() x d

    ClipFeatureMap() = default;
    ClipFeatureMap(GridDims g, std::size_t dim, Matrix data);

    std::size_t cell_index(std::size_t ti, std::size_t hi, std::size_t wi) const {
        return (ti * grid.h + hi) * grid.w + wi;
    }
};

// Per-actor pooled features plus their key-frame boxes.
struct ActorSet {
    Matrix v; // N x d
    std::vector<Box> boxes;

    ActorSet() = default;
    ActorSet(Matrix feats, std::vector<Box> bxs);
    std::size_t count() const { return v.rows(); }
};

struct ShortTermParams {
    Param w_a;    // d x d, query-key bilinear form
    Param w_v;    // d x d, value projection
    Param ffn1_w; // 2d x d
    Param ffn1_b; // 1 x d
    Param ffn2_w; // d x d
    Param ffn2_b; // 1 x d
    Param head_w; // d x c
    Param head_b; // 1 x c
    bool attn_scale = true; // divide logits by sqrt(d)

    std::size_t dim() const { return w_a.value.rows(); }
    std::size_t classes() const { return head_w.value.cols(); }
};

class Rng;
ShortTermParams init_short_term_params(std::size_t d, std::size_t c, Rng& rng,
                                       bool attn_scale = true);

// Row-stochastic actor-to-cell attention.
struct AttentionMap {
    Matrix a; // N x cells
    GridDims dims;
};

struct ShortTermCache {
    ops::MatMul query_proj;   // V * W_A
    ops::MatMul logits_mm;    // (V W_A) * X^T
    ops::SoftmaxRows softmax;
    ops::MatMul value_proj;   // X * W_V
    ops::MatMul aggregate_mm; // A * (X W_V)
    ops::ConcatCols concat;
    ops::Linear ffn1;
    ops::Relu relu;
    ops::Linear ffn2;
    ops::Linear head;
    double logit_scale = 1.0;
    Matrix x_t; // X^T, reused in backward
};

AttentionMap attention_map(const ClipFeatureMap& x, const ActorSet& v, const ShortTermParams& p,
                           ShortTermCache* cache = nullptr);

Matrix aggregate(const AttentionMap& a, const ClipFeatureMap& x, const ShortTermParams& p,
                 ShortTermCache* cache = nullptr);

Matrix short_term_logits(const ActorSet& v, const Matrix& v_s, const ShortTermParams& p,
                         ShortTermCache* cache = nullptr);

// Full branch: attention, aggregation, discriminator. Returns Z_s (N x c).
Matrix short_term_forward(const ClipFeatureMap& x, const ActorSet& v, const ShortTermParams& p,
                          ShortTermCache* cache = nullptr);

// Accumulates parameter gradients for the whole branch. Gradients do not
// flow into X or V (they are data, not parameters).
void short_term_backward(const Matrix& grad_logits, ShortTermCache& cache, ShortTermParams& p);

// One h x w grid per frame, a pure reshape of the actor's attention row.
std::vector<Matrix> export_heatmap(const AttentionMap& a, std::size_t actor_index);

} // namespace lstc
