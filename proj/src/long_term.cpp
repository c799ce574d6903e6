#include "lstc/long_term.hpp"

#include <cmath>

#include "lstc/rng.hpp"

namespace lstc {

NLBlockParams init_nl_block(std::size_t d, std::size_t d_k, Rng& rng) {
    if (d_k < 1) throw ConfigError("nl block: d_k must be >= 1");
    NLBlockParams p;
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    p.theta = Param(rng.normal_matrix(d, d_k, sd));
    p.theta_b = Param(Matrix(1, d_k));
    p.phi = Param(rng.normal_matrix(d, d_k, sd));
    p.phi_b = Param(Matrix(1, d_k));
    p.g = Param(rng.normal_matrix(d, d, sd));
    p.g_b = Param(Matrix(1, d));
    return p;
}

ReaderUnitParams init_reader_unit(std::size_t d, std::size_t d_k, std::size_t m, Rng& rng) {
    if (m < 1) throw ConfigError("reader unit: M must be >= 1");
    ReaderUnitParams p;
    p.heads.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        p.heads.push_back({init_nl_block(d, d_k, rng), init_nl_block(d, d_k, rng)});
    }
    p.beta = Param(Matrix::constant(1, m, 1.0 / static_cast<double>(m)));
    p.ln1_gamma = Param(Matrix::constant(1, d, 1.0));
    p.ln1_beta = Param(Matrix(1, d));
    p.ln2_gamma = Param(Matrix::constant(1, d, 1.0));
    p.ln2_beta = Param(Matrix(1, d));
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    p.ffn1_w = Param(rng.normal_matrix(d, d, sd));
    p.ffn1_b = Param(Matrix(1, d));
    p.ffn2_w = Param(rng.normal_matrix(d, d, sd));
    p.ffn2_b = Param(Matrix(1, d));
    return p;
}

LongTermParams init_long_term_params(std::size_t d, std::size_t c, std::size_t k, std::size_t m,
                                     std::size_t d_k, Rng& rng) {
    if (k < 1) throw ConfigError("long term: K must be >= 1");
    LongTermParams p;
    p.units.reserve(k);
    for (std::size_t i = 0; i < k; ++i) p.units.push_back(init_reader_unit(d, d_k, m, rng));
    p.head_w = Param(rng.normal_matrix(d, c, 1.0 / std::sqrt(static_cast<double>(d))));
    p.head_b = Param(Matrix(1, c));
    return p;
}

Matrix nl_attention(const Matrix& q, const FeatureWindow& ctx, const NLBlockParams& p,
                    NLCache* cache) {
    if (q.cols() != p.dim()) {
        throw DimensionError("nl_attention: query dim " + std::to_string(q.cols()) +
                             " vs block dim " + std::to_string(p.dim()));
    }
    if (cache) {
        cache->query_rows = q.rows();
        cache->query_cols = q.cols();
    }
    if (ctx.empty()) {
        // Empty-context convention: zero output, zero gradients everywhere.
        if (cache) cache->empty_ctx = true;
        return Matrix(q.rows(), p.dim());
    }
    if (ctx.ctx.cols() != p.dim()) {
        throw DimensionError("nl_attention: context dim " + std::to_string(ctx.ctx.cols()) +
                             " vs block dim " + std::to_string(p.dim()));
    }
    const double sc = 1.0 / std::sqrt(static_cast<double>(p.key_dim()));
    if (cache) {
        cache->empty_ctx = false;
        cache->logit_scale = sc;
        Matrix qp = cache->q_proj.forward(q, p.theta.value, p.theta_b.value);
        Matrix kp = cache->k_proj.forward(ctx.ctx, p.phi.value, p.phi_b.value);
        Matrix vp = cache->v_proj.forward(ctx.ctx, p.g.value, p.g_b.value);
        Matrix logits = scale(cache->logits_mm.forward(qp, transpose(kp)), sc);
        Matrix weights = cache->softmax.forward(logits);
        return cache->mix.forward(weights, vp);
    }
    Matrix qp = linear(q, p.theta.value, p.theta_b.value);
    Matrix kp = linear(ctx.ctx, p.phi.value, p.phi_b.value);
    Matrix vp = linear(ctx.ctx, p.g.value, p.g_b.value);
    Matrix weights = softmax_rows(scale(matmul(qp, transpose(kp)), sc));
    return matmul(weights, vp);
}

Matrix nl_attention_backward(const Matrix& upstream, NLCache& cache, NLBlockParams& p) {
    if (cache.empty_ctx) {
        return Matrix(cache.query_rows, cache.query_cols);
    }
    auto [g_weights, g_vp] = cache.mix.backward(upstream);
    Matrix g_logits = scale(cache.softmax.backward(g_weights), cache.logit_scale);
    auto [g_qp, g_kp_t] = cache.logits_mm.backward(g_logits);

    auto gv = cache.v_proj.backward(g_vp);
    p.g.grad = add(p.g.grad, gv.w);
    p.g_b.grad = add(p.g_b.grad, gv.bias);

    auto gk = cache.k_proj.backward(transpose(g_kp_t));
    p.phi.grad = add(p.phi.grad, gk.w);
    p.phi_b.grad = add(p.phi_b.grad, gk.bias);

    auto gq = cache.q_proj.backward(g_qp);
    p.theta.grad = add(p.theta.grad, gq.w);
    p.theta_b.grad = add(p.theta_b.grad, gq.bias);
    return gq.x;
}

Matrix second_order_full(const Matrix& q, const FeatureWindow& ctx, const SecondOrderHead& head) {
    if (ctx.empty()) {
        throw ConfigError("second_order_full: empty context (the oracle requires L >= 1)");
    }
    const std::size_t n = q.rows();
    const std::size_t l = ctx.length();
    const std::size_t d = head.nl1.dim();
    const double sc = 1.0 / std::sqrt(static_cast<double>(head.nl1.key_dim()));

    Matrix qp1 = linear(q, head.nl1.theta.value, head.nl1.theta_b.value);
    Matrix kp1 = linear(ctx.ctx, head.nl1.phi.value, head.nl1.phi_b.value);
    Matrix vp1 = linear(ctx.ctx, head.nl1.g.value, head.nl1.g_b.value);
    Matrix qp2 = linear(q, head.nl2.theta.value, head.nl2.theta_b.value);
    Matrix kp2 = linear(ctx.ctx, head.nl2.phi.value, head.nl2.phi_b.value);
    Matrix vp2 = linear(ctx.ctx, head.nl2.g.value, head.nl2.g_b.value);

    Matrix out(n, d);
    std::vector<double> a(l), b(l), num(d);
    for (std::size_t i = 0; i < n; ++i) {
        double ma = -1e300, mb = -1e300;
        for (std::size_t j = 0; j < l; ++j) {
            double dot1 = 0.0, dot2 = 0.0;
            for (std::size_t kdim = 0; kdim < head.nl1.key_dim(); ++kdim) {
                dot1 += qp1(i, kdim) * kp1(j, kdim);
            }
            for (std::size_t kdim = 0; kdim < head.nl2.key_dim(); ++kdim) {
                dot2 += qp2(i, kdim) * kp2(j, kdim);
            }
            a[j] = dot1 * sc;
            b[j] = dot2 / std::sqrt(static_cast<double>(head.nl2.key_dim()));
            ma = std::max(ma, a[j]);
            mb = std::max(mb, b[j]);
        }
        // Explicit pair enumeration; the shifts cancel in the ratio.
        std::fill(num.begin(), num.end(), 0.0);
        double den = 0.0;
        for (std::size_t j = 0; j < l; ++j) b[j] = std::exp(b[j] - mb);
        for (std::size_t j = 0; j < l; ++j) {
            const double s1 = std::exp(a[j] - ma);
            for (std::size_t k = 0; k < l; ++k) {
                const double w = s1 * b[k];
                den += w;
                for (std::size_t cdim = 0; cdim < d; ++cdim) {
                    num[cdim] += w * vp1(j, cdim) * vp2(k, cdim);
                }
            }
        }
        for (std::size_t cdim = 0; cdim < d; ++cdim) out(i, cdim) = num[cdim] / den;
    }
    return out;
}

Matrix second_order_decoupled(const Matrix& q, const FeatureWindow& ctx,
                              const SecondOrderHead& head, SecondOrderCache* cache) {
    if (cache) {
        Matrix z1 = nl_attention(q, ctx, head.nl1, &cache->nl1);
        Matrix z2 = nl_attention(q, ctx, head.nl2, &cache->nl2);
        return cache->product.forward(z1, z2);
    }
    return hadamard(nl_attention(q, ctx, head.nl1), nl_attention(q, ctx, head.nl2));
}

Matrix second_order_backward(const Matrix& upstream, SecondOrderCache& cache,
                             SecondOrderHead& head) {
    auto [g_z1, g_z2] = cache.product.backward(upstream);
    Matrix gq1 = nl_attention_backward(g_z1, cache.nl1, head.nl1);
    Matrix gq2 = nl_attention_backward(g_z2, cache.nl2, head.nl2);
    return add(gq1, gq2);
}

Matrix reader_unit(const Matrix& q, const FeatureWindow& ctx, const ReaderUnitParams& p,
                   ReaderUnitCache* cache) {
    const std::size_t m = p.heads.size();
    Matrix att(q.rows(), q.cols());
    if (cache) {
        cache->heads.resize(m);
        cache->head_outputs.clear();
        cache->head_outputs.reserve(m);
    }
    for (std::size_t hi = 0; hi < m; ++hi) {
        Matrix z = second_order_decoupled(q, ctx, p.heads[hi], cache ? &cache->heads[hi] : nullptr);
        att = add(att, scale(z, p.beta.value(0, hi)));
        if (cache) cache->head_outputs.push_back(std::move(z));
    }
    Matrix u_in = add(q, att);
    if (cache) {
        Matrix u = cache->ln1.forward(u_in, p.ln1_gamma.value, p.ln1_beta.value, p.ln_eps);
        Matrix f1 = cache->relu.forward(cache->ffn1.forward(u, p.ffn1_w.value, p.ffn1_b.value));
        Matrix f2 = cache->ffn2.forward(f1, p.ffn2_w.value, p.ffn2_b.value);
        return cache->ln2.forward(add(u, f2), p.ln2_gamma.value, p.ln2_beta.value, p.ln_eps);
    }
    Matrix u = layer_norm(u_in, p.ln1_gamma.value, p.ln1_beta.value, p.ln_eps);
    Matrix f1 = relu(linear(u, p.ffn1_w.value, p.ffn1_b.value));
    Matrix f2 = linear(f1, p.ffn2_w.value, p.ffn2_b.value);
    return layer_norm(add(u, f2), p.ln2_gamma.value, p.ln2_beta.value, p.ln_eps);
}

Matrix reader_unit_backward(const Matrix& upstream, ReaderUnitCache& cache, ReaderUnitParams& p) {
    auto g2 = cache.ln2.backward(upstream);
    p.ln2_gamma.grad = add(p.ln2_gamma.grad, g2.gamma);
    p.ln2_beta.grad = add(p.ln2_beta.grad, g2.beta);

    auto gf2 = cache.ffn2.backward(g2.x);
    p.ffn2_w.grad = add(p.ffn2_w.grad, gf2.w);
    p.ffn2_b.grad = add(p.ffn2_b.grad, gf2.bias);
    Matrix g_pre = cache.relu.backward(gf2.x);
    auto gf1 = cache.ffn1.backward(g_pre);
    p.ffn1_w.grad = add(p.ffn1_w.grad, gf1.w);
    p.ffn1_b.grad = add(p.ffn1_b.grad, gf1.bias);

    Matrix g_u = add(g2.x, gf1.x); // residual plus FFN path
    auto g1 = cache.ln1.backward(g_u);
    p.ln1_gamma.grad = add(p.ln1_gamma.grad, g1.gamma);
    p.ln1_beta.grad = add(p.ln1_beta.grad, g1.beta);

    Matrix g_q = g1.x; // residual into q
    for (std::size_t hi = 0; hi < p.heads.size(); ++hi) {
        const double beta_m = p.beta.value(0, hi);
        double g_beta = 0.0;
        const Matrix& z = cache.head_outputs[hi];
        for (std::size_t i = 0; i < z.size(); ++i) g_beta += g1.x.data()[i] * z.data()[i];
        p.beta.grad(0, hi) += g_beta;
        Matrix g_z = scale(g1.x, beta_m);
        g_q = add(g_q, second_order_backward(g_z, cache.heads[hi], p.heads[hi]));
    }
    return g_q;
}

Matrix long_term_logits(const ActorSet& v, const FeatureWindow& ctx, const LongTermParams& p,
                        LongTermCache* cache) {
    Matrix q = v.v;
    if (cache) cache->units.resize(p.units.size());
    for (std::size_t k = 0; k < p.units.size(); ++k) {
        q = reader_unit(q, ctx, p.units[k], cache ? &cache->units[k] : nullptr);
    }
    if (cache) return cache->head.forward(q, p.head_w.value, p.head_b.value);
    return linear(q, p.head_w.value, p.head_b.value);
}

void long_term_backward(const Matrix& grad_logits, LongTermCache& cache, LongTermParams& p) {
    auto gh = cache.head.backward(grad_logits);
    p.head_w.grad = add(p.head_w.grad, gh.w);
    p.head_b.grad = add(p.head_b.grad, gh.bias);
    Matrix gq = gh.x;
    for (std::size_t k = p.units.size(); k-- > 0;) {
        gq = reader_unit_backward(gq, cache.units[k], p.units[k]);
    }
}

} // namespace lstc
