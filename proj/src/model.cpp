#include "lstc/model.hpp"

#include <cmath>

#include "lstc/binio.hpp"
#include "lstc/rng.hpp"

namespace lstc {

void ModelDims::validate() const {
    if (d < 1 || c < 1) throw ConfigError("model dims: d and c must be >= 1");
    if (k < 1 || m < 1) throw ConfigError("model dims: K and M must be >= 1");
    if (d_k < 1) throw ConfigError("model dims: d_k must be >= 1");
}

ModelState init_model(const ModelDims& dims, std::uint64_t seed) {
    dims.validate();
    ModelState s;
    s.dims = dims;
    Rng rng(seed);
    s.short_branch = init_short_term_params(dims.d, dims.c, rng, dims.attn_scale);
    s.long_branch = init_long_term_params(dims.d, dims.c, dims.k, dims.m, dims.d_k, rng);
    return s;
}

void visit_params(ModelState& m, const std::function<void(const std::string&, Param&)>& fn) {
    ShortTermParams& s = m.short_branch;
    fn("short.w_a", s.w_a);
    fn("short.w_v", s.w_v);
    fn("short.ffn1_w", s.ffn1_w);
    fn("short.ffn1_b", s.ffn1_b);
    fn("short.ffn2_w", s.ffn2_w);
    fn("short.ffn2_b", s.ffn2_b);
    fn("short.head_w", s.head_w);
    fn("short.head_b", s.head_b);
    for (std::size_t k = 0; k < m.long_branch.units.size(); ++k) {
        ReaderUnitParams& u = m.long_branch.units[k];
        const std::string uk = "long.unit" + std::to_string(k) + ".";
        for (std::size_t h = 0; h < u.heads.size(); ++h) {
            const std::string hk = uk + "head" + std::to_string(h) + ".";
            auto nl = [&](const std::string& name, NLBlockParams& b) {
                fn(hk + name + ".theta", b.theta);
                fn(hk + name + ".theta_b", b.theta_b);
                fn(hk + name + ".phi", b.phi);
                fn(hk + name + ".phi_b", b.phi_b);
                fn(hk + name + ".g", b.g);
                fn(hk + name + ".g_b", b.g_b);
            };
            nl("nl1", u.heads[h].nl1);
            nl("nl2", u.heads[h].nl2);
        }
        fn(uk + "beta", u.beta);
        fn(uk + "ln1_gamma", u.ln1_gamma);
        fn(uk + "ln1_beta", u.ln1_beta);
        fn(uk + "ln2_gamma", u.ln2_gamma);
        fn(uk + "ln2_beta", u.ln2_beta);
        fn(uk + "ffn1_w", u.ffn1_w);
        fn(uk + "ffn1_b", u.ffn1_b);
        fn(uk + "ffn2_w", u.ffn2_w);
        fn(uk + "ffn2_b", u.ffn2_b);
    }
    fn("long.head_w", m.long_branch.head_w);
    fn("long.head_b", m.long_branch.head_b);
}

void zero_grads(ModelState& m) {
    visit_params(m, [](const std::string&, Param& p) { p.zero_grad(); });
}

std::size_t param_count(ModelState& m) {
    std::size_t n = 0;
    visit_params(m, [&](const std::string&, Param& p) { n += p.value.size(); });
    return n;
}

void save_model(const ModelState& m, const std::string& path) {
    BinWriter w;
    w.bytes("LSTC", 4);
    w.u32(1); // version
    w.u32(static_cast<std::uint32_t>(m.dims.d));
    w.u32(static_cast<std::uint32_t>(m.dims.c));
    w.u32(static_cast<std::uint32_t>(m.dims.k));
    w.u32(static_cast<std::uint32_t>(m.dims.m));
    w.u32(static_cast<std::uint32_t>(m.dims.d_k));
    w.u32(m.dims.attn_scale ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(m.stage));
    w.i64(m.window.radius_s);
    w.u32(m.window.include_center ? 1 : 0);
    w.f64(m.threshold);
    visit_params(const_cast<ModelState&>(m), [&](const std::string&, Param& p) {
        w.u32(static_cast<std::uint32_t>(p.value.rows()));
        w.u32(static_cast<std::uint32_t>(p.value.cols()));
        for (double v : p.value.data()) w.f64(v);
    });
    w.to_file(path);
}

ModelState load_model(const std::string& path) {
    BinReader r = BinReader::from_file(path);
    r.expect_magic("LSTC");
    const std::uint32_t version = r.u32("version");
    if (version != 1) {
        throw FormatError("unsupported model version " + std::to_string(version), r.offset() - 4);
    }
    ModelDims dims;
    dims.d = r.u32("d");
    dims.c = r.u32("c");
    dims.k = r.u32("K");
    dims.m = r.u32("M");
    dims.d_k = r.u32("d_k");
    dims.attn_scale = r.u32("attn_scale flag") != 0;
    try {
        dims.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid model dims: ") + e.what(), 8);
    }
    ModelState s = init_model(dims, 0);
    s.stage = static_cast<int>(r.u32("stage"));
    if (s.stage != 1 && s.stage != 2) {
        throw FormatError("model stage must be 1 or 2", r.offset() - 4);
    }
    s.window.radius_s = r.i64("window radius");
    s.window.include_center = r.u32("include_center flag") != 0;
    s.threshold = r.f64("threshold");
    visit_params(s, [&](const std::string& name, Param& p) {
        const std::size_t at = r.offset();
        const std::uint32_t rows = r.u32("param rows");
        const std::uint32_t cols = r.u32("param cols");
        if (rows != p.value.rows() || cols != p.value.cols()) {
            throw FormatError("shape mismatch for " + name + ": file has " +
                                  std::to_string(rows) + "x" + std::to_string(cols) +
                                  ", model expects " + p.value.shape_str(),
                              at);
        }
        for (double& v : p.value.data()) {
            const std::size_t vat = r.offset();
            v = r.f64("param value");
            if (!std::isfinite(v)) {
                throw FormatError("non-finite value in " + name, vat);
            }
        }
    });
    r.expect_end("model payload");
    return s;
}

} // namespace lstc
