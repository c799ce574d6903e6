#pragma once

#include <vector>

#include "lstc/feature_window.hpp"
#include "lstc/ops.hpp"
#include "lstc/short_term.hpp"

namespace lstc {

// One first-order attention block: embedded-Gaussian similarity between
// projected queries and context, value map g.
struct NLBlockParams {
    Param theta;   // d x d_k
    Param theta_b; // 1 x d_k
    Param phi;     // d x d_k
    Param phi_b;   // 1 x d_k
    Param g;       // d x d
    Param g_b;     // 1 x d

    std::size_t dim() const { return theta.value.rows(); }
    std::size_t key_dim() const { return theta.value.cols(); }
};

// Two first-order blocks whose outputs multiply elementwise.
struct SecondOrderHead {
    NLBlockParams nl1;
    NLBlockParams nl2;
};

struct ReaderUnitParams {
    std::vector<SecondOrderHead> heads; // M heads
    Param beta;                         // 1 x M head weights
    Param ln1_gamma, ln1_beta;          // 1 x d
    Param ln2_gamma, ln2_beta;          // 1 x d
    Param ffn1_w, ffn1_b;               // d x d, 1 x d
    Param ffn2_w, ffn2_b;               // d x d, 1 x d
    double ln_eps = 1e-5;
};

struct LongTermParams {
    std::vector<ReaderUnitParams> units; // K cascaded units
    Param head_w;                        // d x c
    Param head_b;                        // 1 x c

    std::size_t stages() const { return units.size(); }
    std::size_t heads_per_unit() const { return units.empty() ? 0 : units[0].heads.size(); }
};

class Rng;
NLBlockParams init_nl_block(std::size_t d, std::size_t d_k, Rng& rng);
ReaderUnitParams init_reader_unit(std::size_t d, std::size_t d_k, std::size_t m, Rng& rng);
LongTermParams init_long_term_params(std::size_t d, std::size_t c, std::size_t k, std::size_t m,
                                     std::size_t d_k, Rng& rng);

struct NLCache {
    ops::Linear q_proj, k_proj, v_proj;
    ops::MatMul logits_mm;
    ops::SoftmaxRows softmax;
    ops::MatMul mix;
    double logit_scale = 1.0;
    bool empty_ctx = false;
    std::size_t query_rows = 0, query_cols = 0;
    const Matrix& weights() const { return softmax.output(); }
};

// Eq-style first-order attention: rows of softmax((q theta)(c phi)^T / sqrt(d_k))
// mix the g-projected context. Empty context yields the zero matrix.
Matrix nl_attention(const Matrix& q, const FeatureWindow& ctx, const NLBlockParams& p,
                    NLCache* cache = nullptr);
// Returns grad wrt q; accumulates into the block's parameter grads.
Matrix nl_attention_backward(const Matrix& upstream, NLCache& cache, NLBlockParams& p);

// Brute-force second-order attention over all context pairs (j, k) with
// separable similarity s1(i,j) * s2(i,k) and pair map g1(j) ⊙ g2(k).
// Theta(L^2) per query; the reference the decoupled path is checked against.
Matrix second_order_full(const Matrix& q, const FeatureWindow& ctx, const SecondOrderHead& head);

struct SecondOrderCache {
    NLCache nl1, nl2;
    ops::EwiseMul product;
};

// Linear-time form: elementwise product of the two first-order outputs.
Matrix second_order_decoupled(const Matrix& q, const FeatureWindow& ctx, const SecondOrderHead& head,
                              SecondOrderCache* cache = nullptr);
Matrix second_order_backward(const Matrix& upstream, SecondOrderCache& cache, SecondOrderHead& head);

struct ReaderUnitCache {
    std::vector<SecondOrderCache> heads;
    ops::LayerNorm ln1, ln2;
    ops::Linear ffn1;
    ops::Relu relu;
    ops::Linear ffn2;
    std::vector<Matrix> head_outputs; // per-head z2nd, needed for beta grads
};

// u = LN1(q + sum_m beta_m z2nd_m); out = LN2(u + FFN(u)).
Matrix reader_unit(const Matrix& q, const FeatureWindow& ctx, const ReaderUnitParams& p,
                   ReaderUnitCache* cache = nullptr);
Matrix reader_unit_backward(const Matrix& upstream, ReaderUnitCache& cache, ReaderUnitParams& p);

struct LongTermCache {
    std::vector<ReaderUnitCache> units;
    ops::Linear head;
};

// Cascades K reader units from q0 = V and maps the result to class space.
Matrix long_term_logits(const ActorSet& v, const FeatureWindow& ctx, const LongTermParams& p,
                        LongTermCache* cache = nullptr);
void long_term_backward(const Matrix& grad_logits, LongTermCache& cache, LongTermParams& p);

} // namespace lstc
