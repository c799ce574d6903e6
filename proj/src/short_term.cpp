#include "lstc/short_term.hpp"

#include <cmath>

#include "lstc/rng.hpp"

namespace lstc {

ClipFeatureMap::ClipFeatureMap(GridDims g, std::size_t dim, Matrix data)
    : grid(g), d(dim), x(std::move(data)) {
    if (grid.cells() == 0) {
        throw ConfigError("clip feature map: grid must have h, w, t >= 1");
    }
    if (x.rows() != grid.cells() || x.cols() != d) {
        throw DimensionError("clip feature map: data is " + x.shape_str() + ", expected " +
                             std::to_string(grid.cells()) + "x" + std::to_string(d));
    }
}

ActorSet::ActorSet(Matrix feats, std::vector<Box> bxs) : v(std::move(feats)), boxes(std::move(bxs)) {
    if (v.rows() != boxes.size()) {
        throw DimensionError("actor set: " + std::to_string(v.rows()) + " feature rows vs " +
                             std::to_string(boxes.size()) + " boxes");
    }
    for (const Box& b : boxes) b.validate();
}

ShortTermParams init_short_term_params(std::size_t d, std::size_t c, Rng& rng, bool attn_scale) {
    ShortTermParams p;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    p.w_a = Param(rng.normal_matrix(d, d, sd));
    p.w_v = Param(rng.normal_matrix(d, d, sd));
    p.ffn1_w = Param(rng.normal_matrix(2 * d, d, 1.0 / std::sqrt(2.0 * static_cast<double>(d))));
    p.ffn1_b = Param(Matrix(1, d));
    p.ffn2_w = Param(rng.normal_matrix(d, d, sd));
    p.ffn2_b = Param(Matrix(1, d));
    p.head_w = Param(rng.normal_matrix(d, c, sd));
    p.head_b = Param(Matrix(1, c));
    p.attn_scale = attn_scale;
    return p;
}

AttentionMap attention_map(const ClipFeatureMap& x, const ActorSet& v, const ShortTermParams& p,
                           ShortTermCache* cache) {
    if (v.v.cols() != x.d) {
        throw DimensionError("attention_map: actor dim " + std::to_string(v.v.cols()) +
                             " vs clip dim " + std::to_string(x.d));
    }
    const double sc = p.attn_scale ? 1.0 / std::sqrt(static_cast<double>(x.d)) : 1.0;
    Matrix xt = transpose(x.x);
    AttentionMap out;
    out.dims = x.grid;
    if (cache) {
        cache->logit_scale = sc;
        cache->x_t = xt;
        Matrix proj = cache->query_proj.forward(v.v, p.w_a.value);
        Matrix logits = scale(cache->logits_mm.forward(proj, xt), sc);
        out.a = cache->softmax.forward(logits);
    } else {
        Matrix logits = scale(matmul(matmul(v.v, p.w_a.value), xt), sc);
        out.a = softmax_rows(logits);
    }
    return out;
}

Matrix aggregate(const AttentionMap& a, const ClipFeatureMap& x, const ShortTermParams& p,
                 ShortTermCache* cache) {
    if (a.dims != x.grid) {
        throw DimensionError("aggregate: attention grid does not match clip grid");
    }
    if (a.a.cols() != x.grid.cells() && a.a.rows() > 0) {
        throw DimensionError("aggregate: attention has " + std::to_string(a.a.cols()) +
                             " columns, clip has " + std::to_string(x.grid.cells()) + " cells");
    }
    if (cache) {
        Matrix projected = cache->value_proj.forward(x.x, p.w_v.value);
        return cache->aggregate_mm.forward(a.a, projected);
    }
    return matmul(a.a, matmul(x.x, p.w_v.value));
}

Matrix short_term_logits(const ActorSet& v, const Matrix& v_s, const ShortTermParams& p,
                         ShortTermCache* cache) {
    if (v.v.rows() != v_s.rows() || v.v.cols() != v_s.cols()) {
        throw DimensionError("short_term_logits: V is " + v.v.shape_str() + ", V_s is " +
                             v_s.shape_str());
    }
    if (cache) {
        Matrix cat = cache->concat.forward(v.v, v_s);
        Matrix f1 = cache->relu.forward(cache->ffn1.forward(cat, p.ffn1_w.value, p.ffn1_b.value));
        Matrix f2 = cache->ffn2.forward(f1, p.ffn2_w.value, p.ffn2_b.value);
        return cache->head.forward(f2, p.head_w.value, p.head_b.value);
    }
    Matrix cat = hstack(v.v, v_s);
    Matrix f1 = relu(linear(cat, p.ffn1_w.value, p.ffn1_b.value));
    Matrix f2 = linear(f1, p.ffn2_w.value, p.ffn2_b.value);
    return linear(f2, p.head_w.value, p.head_b.value);
}

Matrix short_term_forward(const ClipFeatureMap& x, const ActorSet& v, const ShortTermParams& p,
                          ShortTermCache* cache) {
    AttentionMap a = attention_map(x, v, p, cache);
    Matrix v_s = aggregate(a, x, p, cache);
    return short_term_logits(v, v_s, p, cache);
}

void short_term_backward(const Matrix& grad_logits, ShortTermCache& cache, ShortTermParams& p) {
    auto gh = cache.head.backward(grad_logits);
    p.head_w.grad = add(p.head_w.grad, gh.w);
    p.head_b.grad = add(p.head_b.grad, gh.bias);

    auto g2 = cache.ffn2.backward(gh.x);
    p.ffn2_w.grad = add(p.ffn2_w.grad, g2.w);
    p.ffn2_b.grad = add(p.ffn2_b.grad, g2.bias);

    Matrix g_pre = cache.relu.backward(g2.x);
    auto g1 = cache.ffn1.backward(g_pre);
    p.ffn1_w.grad = add(p.ffn1_w.grad, g1.w);
    p.ffn1_b.grad = add(p.ffn1_b.grad, g1.bias);

    auto [g_v_direct, g_vs] = cache.concat.backward(g1.x);
    (void)g_v_direct; // V is data; no parameters upstream of it

    auto [g_attn, g_projected] = cache.aggregate_mm.backward(g_vs);
    auto [g_x_unused, g_wv] = cache.value_proj.backward(g_projected);
    (void)g_x_unused;
    p.w_v.grad = add(p.w_v.grad, g_wv);

    Matrix g_logits = scale(cache.softmax.backward(g_attn), cache.logit_scale);
    auto [g_proj, g_xt_unused] = cache.logits_mm.backward(g_logits);
    (void)g_xt_unused;
    auto [g_v_unused, g_wa] = cache.query_proj.backward(g_proj);
    (void)g_v_unused;
    p.w_a.grad = add(p.w_a.grad, g_wa);
}

std::vector<Matrix> export_heatmap(const AttentionMap& a, std::size_t actor_index) {
    if (actor_index >= a.a.rows()) {
        throw ConfigError("export_heatmap: actor index " + std::to_string(actor_index) +
                          " out of range for " + std::to_string(a.a.rows()) + " actors");
    }
    std::vector<Matrix> frames;
    frames.reserve(a.dims.t);
    const auto row = a.a.row(actor_index);
    for (std::size_t ti = 0; ti < a.dims.t; ++ti) {
        Matrix frame(a.dims.h, a.dims.w);
        for (std::size_t i = 0; i < a.dims.h; ++i) {
            for (std::size_t j = 0; j < a.dims.w; ++j) {
                frame(i, j) = row[(ti * a.dims.h + i) * a.dims.w + j];
            }
        }
        frames.push_back(std::move(frame));
    }
    return frames;
}

} // namespace lstc
