#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lstc/fusion.hpp"
#include "lstc/grad_check.hpp"
#include "lstc/rng.hpp"

using namespace lstc;

TEST_CASE("cancelling logits give exactly one half") {
    Rng rng(0);
    Matrix z = rng.normal_matrix(3, 4, 2.0);
    Matrix neg = scale(z, -1.0);
    Matrix c = fuse({z, neg});
    for (double p : c.data()) CHECK(p == 0.5);
    Matrix zero(2, 2);
    Matrix cz = fuse({zero, zero});
    for (double p : cz.data()) CHECK(p == 0.5);
}

TEST_CASE("sigmoid closed form at log 3") {
    Matrix zs{{std::log(3.0)}};
    Matrix zl{{0.0}};
    CHECK(fuse({zs, zl})(0, 0) == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("fusion is symmetric bitwise") {
    Rng rng(1);
    Matrix a = rng.normal_matrix(4, 5, 3.0);
    Matrix b = rng.normal_matrix(4, 5, 3.0);
    CHECK(fuse({a, b}) == fuse({b, a}));
    CHECK_THROWS_AS(fuse({a, Matrix(4, 4)}), DimensionError);
}

TEST_CASE("probabilities stay inside the open unit interval") {
    Matrix huge{{1e6, -1e6}};
    Matrix zero(1, 2);
    Matrix c = fuse({huge, zero});
    CHECK(c(0, 0) <= 1.0);
    CHECK(c(0, 1) >= 0.0);
    CHECK(std::isfinite(bce_loss(c, Matrix{{0.0, 1.0}}).loss));
}

TEST_CASE("perfect predictions cost nearly nothing") {
    Matrix y{{1, 0}, {0, 1}};
    BceResult r = bce_loss(y, y);
    CHECK(r.loss >= 0.0);
    CHECK(r.loss <= 1e-11);
}

TEST_CASE("maximum-entropy prediction costs ln 2") {
    Matrix p = Matrix::constant(3, 2, 0.5);
    Matrix y{{1, 0}, {0, 0}, {1, 1}};
    CHECK(bce_loss(p, y).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("single-cell closed form") {
    BceResult r = bce_loss(Matrix{{0.75}}, Matrix{{1.0}});
    CHECK(r.loss == doctest::Approx(-std::log(0.75)).epsilon(1e-14));
    CHECK(r.grad_logits(0, 0) == doctest::Approx(-0.25).epsilon(1e-14));
}

TEST_CASE("bce rejects empty and non-binary input") {
    CHECK_THROWS_AS(bce_loss(Matrix(0, 3), Matrix(0, 3)), ConfigError);
    CHECK_THROWS_AS(bce_loss(Matrix{{0.5}}, Matrix{{0.3}}), ConfigError);
    CHECK_THROWS_AS(bce_loss(Matrix{{0.5}}, Matrix{{0.5, 0.5}}), DimensionError);
}

TEST_CASE("loss gradient matches finite differences and both blocks share it") {
    Rng rng(2);
    Param zs(rng.normal_matrix(2, 3));
    Param zl(rng.normal_matrix(2, 3));
    Matrix y(2, 3);
    for (double& v : y.data()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;

    auto loss = [&]() {
        zs.zero_grad();
        zl.zero_grad();
        BceResult r = bce_loss(fuse({zs.value, zl.value}), y);
        zs.grad = r.grad_logits;
        zl.grad = r.grad_logits;
        return r.loss;
    };
    GradReport rep = grad_check("bce_fuse", loss, {{"z_s", &zs}, {"z_l", &zl}}, 1e-5);
    CHECK(rep.max_rel_err < 1e-5);
    CHECK(rep.per_param_err.size() == 2);
    // additive fusion: the two error profiles come from one shared gradient
    loss();
    CHECK(zs.grad == zl.grad);
}

TEST_CASE("raising a positive-label logit never raises the loss") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Matrix zs = rng.normal_matrix(2, 3, 2.0);
        Matrix zl = rng.normal_matrix(2, 3, 2.0);
        Matrix y(2, 3);
        for (double& v : y.data()) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
        const double before = bce_loss(fuse({zs, zl}), y).loss;
        const std::size_t i = rng.below(2), j = rng.below(3);
        Matrix bumped = zs;
        bumped(i, j) += rng.uniform(0.0, 3.0);
        const double after = bce_loss(fuse({bumped, zl}), y).loss;
        if (y(i, j) == 1.0) {
            CHECK(after <= before + 1e-15);
        } else {
            CHECK(after >= before - 1e-15);
        }
    }
}

TEST_CASE("prediction thresholding") {
    Matrix probs{{0.5, 0.49}, {0.91, 0.1}};
    Prediction pred = predict(probs, 0.5);
    CHECK(pred.labels == Matrix{{1, 0}, {1, 0}});
    CHECK(pred.scores == probs);

    Prediction none = predict(Matrix::constant(2, 2, 0.2), 0.5);
    for (double v : none.labels.data()) CHECK(v == 0.0);

    Rng rng(4);
    Matrix r = rng.uniform_matrix(3, 4, 0.0, 1.0);
    Prediction p = predict(r, 0.7);
    for (std::size_t i = 0; i < r.size(); ++i) {
        CHECK(p.labels.data()[i] == (r.data()[i] >= 0.7 ? 1.0 : 0.0));
    }

    CHECK_THROWS_AS(predict(probs, 0.0), ConfigError);
    CHECK_THROWS_AS(predict(probs, 1.0), ConfigError);
}
