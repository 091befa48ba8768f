#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include <psrg/psrg.hpp>

#include "oracles.hpp"

using psrg::DTensor;
using psrg::Rng;
using psrg::Tensor;

namespace {

Tensor random_tensor(const psrg::Shape& shape, uint64_t seed, float lo, float hi) {
    Rng rng(seed);
    return Tensor::rand_uniform(shape, rng, lo, hi);
}

void check_conv_against_oracle(const psrg::Shape& xs, const psrg::Shape& ws, int stride, int pad,
                               uint64_t seed) {
    auto x = random_tensor(xs, seed, -1.0f, 1.0f);
    auto w = random_tensor(ws, seed + 1, -0.5f, 0.5f);
    auto b = random_tensor({ws[0]}, seed + 2, -0.5f, 0.5f);
    auto out = psrg::conv2d(x, w, b, stride, pad);
    auto ref = oracle::conv2d(oracle::to_grid(x), oracle::to_grid(w), oracle::to_doubles(b),
                              stride, pad);
    REQUIRE(out.dim(0) == ref.n);
    REQUIRE(out.dim(1) == ref.c);
    REQUIRE(out.dim(2) == ref.h);
    REQUIRE(out.dim(3) == ref.w);
    REQUIRE(oracle::max_abs_diff(out, ref) < 1e-5);
}

}  // namespace

TEST_CASE("conv2d: zero input returns the bias everywhere", "[ops][conv]") {
    Tensor x({2, 3, 5, 5}, 0.0f);
    auto w = random_tensor({4, 3, 3, 3}, 11, -0.5f, 0.5f);
    Tensor b({4}, {0.1f, -0.2f, 0.3f, 0.0f});
    auto y = psrg::conv2d(x, w, b, 1, 1);
    for (int64_t n = 0; n < y.dim(0); ++n)
        for (int64_t c = 0; c < y.dim(1); ++c)
            for (int64_t i = 0; i < y.dim(2); ++i)
                for (int64_t j = 0; j < y.dim(3); ++j) REQUIRE(y.at({n, c, i, j}) == b[c]);
}

TEST_CASE("conv2d: unit impulse reproduces the rotated kernel", "[ops][conv]") {
    Tensor x({1, 1, 5, 5}, 0.0f);
    x.at({0, 0, 2, 2}) = 1.0f;
    Tensor w({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor b({1}, 0.0f);
    auto y = psrg::conv2d(x, w, b, 1, 1);
    for (int64_t oy = 0; oy < 5; ++oy)
        for (int64_t ox = 0; ox < 5; ++ox) {
            const int64_t ky = 1 - (oy - 2), kx = 1 - (ox - 2);
            const float want =
                (ky >= 0 && ky < 3 && kx >= 0 && kx < 3) ? w.at({0, 0, ky, kx}) : 0.0f;
            REQUIRE(y.at({0, 0, oy, ox}) == want);
        }
}

TEST_CASE("conv2d: random inputs match the loop oracle", "[ops][conv][oracle]") {
    check_conv_against_oracle({2, 4, 8, 8}, {3, 4, 3, 3}, 1, 1, 101);
    check_conv_against_oracle({2, 4, 8, 8}, {5, 4, 3, 3}, 2, 1, 107);
    check_conv_against_oracle({1, 3, 8, 7}, {2, 3, 3, 3}, 2, 0, 113);
    check_conv_against_oracle({2, 2, 6, 6}, {4, 2, 1, 1}, 1, 0, 127);
    check_conv_against_oracle({1, 1, 8, 8}, {2, 1, 5, 5}, 1, 2, 131);
    check_conv_against_oracle({2, 3, 8, 8}, {3, 3, 9, 9}, 1, 4, 137);
}

TEST_CASE("conv2d: shape and config contracts", "[ops][conv]") {
    auto w = random_tensor({2, 3, 3, 3}, 1, -1, 1);
    Tensor b({2}, 0.0f);
    REQUIRE_THROWS_AS(psrg::conv2d(Tensor({3, 5, 5}, 0.0f), w, b, 1, 1), psrg::ShapeError);
    REQUIRE_THROWS_AS(psrg::conv2d(Tensor({1, 2, 5, 5}, 0.0f), w, b, 1, 1), psrg::ShapeError);
    REQUIRE_THROWS_AS(psrg::conv2d(Tensor({1, 3, 5, 5}, 0.0f), w, Tensor({3}, 0.0f), 1, 1),
                      psrg::ShapeError);
    REQUIRE_THROWS_AS(psrg::conv2d(Tensor({1, 3, 2, 2}, 0.0f), w, b, 1, 0), psrg::ShapeError);
    REQUIRE_THROWS_AS(psrg::conv2d(Tensor({1, 3, 5, 5}, 0.0f), w, b, 0, 1), psrg::ConfigError);
    REQUIRE_THROWS_AS(psrg::conv2d(Tensor({1, 3, 5, 5}, 0.0f), w, b, 1, -1), psrg::ConfigError);
}

TEST_CASE("dense: identity, hand example, zero weight", "[ops][dense]") {
    Tensor x({1, 2}, {1.0f, 2.0f});

    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor bias({2}, {0.5f, -0.5f});
    auto y_eye = psrg::dense(x, eye, bias);
    REQUIRE(y_eye.at({0, 0}) == 1.5f);
    REQUIRE(y_eye.at({0, 1}) == 1.5f);

    Tensor w({2, 2}, {2, 1, 1, 3});
    Tensor zero_b({2}, 0.0f);
    auto y = psrg::dense(x, w, zero_b);
    REQUIRE(y.at({0, 0}) == 4.0f);
    REQUIRE(y.at({0, 1}) == 7.0f);

    Tensor zero_w({2, 2}, 0.0f);
    auto y_b = psrg::dense(x, zero_w, bias);
    REQUIRE(y_b.at({0, 0}) == 0.5f);
    REQUIRE(y_b.at({0, 1}) == -0.5f);

    REQUIRE_THROWS_AS(psrg::dense(Tensor({2}, 0.0f), w, bias), psrg::ShapeError);
    REQUIRE_THROWS_AS(psrg::dense(x, Tensor({3, 2}, 0.0f), bias), psrg::ShapeError);
    REQUIRE_THROWS_AS(psrg::dense(x, w, Tensor({3}, 0.0f)), psrg::ShapeError);
}

TEST_CASE("batch_norm: already normalized input passes through", "[ops][bn]") {
    Tensor x({1, 1, 2, 2}, {-1.0f, 1.0f, -1.0f, 1.0f});
    Tensor gamma({1}, 1.0f), beta({1}, 0.0f);
    Tensor rm({1}, 0.0f), rv({1}, 1.0f), rc({1}, 0.0f);
    auto y = psrg::batch_norm(x, gamma, beta, rm, rv, rc, true);
    for (int64_t i = 0; i < 4; ++i) REQUIRE(std::fabs(y[i] - x[i]) < 1e-4f);
}

TEST_CASE("batch_norm: constant channel collapses to the shift", "[ops][bn]") {
    Tensor x({2, 2, 2, 2}, 0.0f);
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = (i / 4) % 2 == 0 ? 0.7f : -0.2f;
    Tensor gamma({2}, {1.5f, 2.0f}), beta({2}, {0.3f, -0.1f});
    Tensor rm({2}, 0.0f), rv({2}, 1.0f), rc({1}, 0.0f);
    auto y = psrg::batch_norm(x, gamma, beta, rm, rv, rc, true);
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t c = 0; c < 2; ++c)
            for (int64_t i = 0; i < 4; ++i) {
                const float want = c == 0 ? 0.3f : -0.1f;
                REQUIRE(std::fabs(y[(n * 2 + c) * 4 + i] - want) < 1e-3f);
            }
}

TEST_CASE("batch_norm: running statistics blend with the batch", "[ops][bn]") {
    auto x = random_tensor({2, 2, 3, 3}, 211, 0.0f, 1.0f);
    Tensor gamma({2}, 1.0f), beta({2}, 0.0f);
    Tensor rm({2}, 0.0f), rv({2}, 1.0f), rc({1}, 0.0f);
    psrg::batch_norm(x, gamma, beta, rm, rv, rc, true);
    REQUIRE(rc[0] == 1.0f);
    for (int64_t c = 0; c < 2; ++c) {
        double mu = 0.0;
        for (int64_t n = 0; n < 2; ++n)
            for (int64_t i = 0; i < 9; ++i) mu += x[(n * 2 + c) * 9 + i];
        mu /= 18.0;
        double var = 0.0;
        for (int64_t n = 0; n < 2; ++n)
            for (int64_t i = 0; i < 9; ++i) {
                const double d = x[(n * 2 + c) * 9 + i] - mu;
                var += d * d;
            }
        var /= 18.0;
        REQUIRE(std::fabs(rm[c] - 0.1 * mu) < 1e-6);
        REQUIRE(std::fabs(rv[c] - (0.9 + 0.1 * var)) < 1e-6);
    }
}

TEST_CASE("batch_norm: eval mode contracts and determinism", "[ops][bn]") {
    auto x = random_tensor({2, 2, 3, 3}, 223, 0.0f, 1.0f);
    Tensor gamma({2}, 1.0f), beta({2}, 0.0f);
    Tensor rm({2}, 0.0f), rv({2}, 1.0f), rc({1}, 0.0f);
    REQUIRE_THROWS_AS(psrg::batch_norm(x, gamma, beta, rm, rv, rc, false), psrg::ConfigError);

    psrg::batch_norm(x, gamma, beta, rm, rv, rc, true);
    auto e1 = psrg::batch_norm(x, gamma, beta, rm, rv, rc, false);
    auto e2 = psrg::batch_norm(x, gamma, beta, rm, rv, rc, false);
    REQUIRE(oracle::bitwise_equal(e1, e2));
    REQUIRE(rc[0] == 1.0f);

    Tensor tiny({1, 1, 1, 1}, 0.5f);
    Tensor g1({1}, 1.0f), b1({1}, 0.0f), m1({1}, 0.0f), v1({1}, 1.0f), c1({1}, 0.0f);
    REQUIRE_THROWS_AS(psrg::batch_norm(tiny, g1, b1, m1, v1, c1, true), psrg::ShapeError);
}

TEST_CASE("pixel_shuffle: 4-channel pixel becomes a 2x2 grid", "[ops][shuffle]") {
    Tensor x({1, 4, 1, 1}, {1.0f, 2.0f, 3.0f, 4.0f});
    auto y = psrg::pixel_shuffle_upsample(x, 2);
    REQUIRE(y.shape() == psrg::Shape{1, 1, 2, 2});
    REQUIRE(y.at({0, 0, 0, 0}) == 1.0f);
    REQUIRE(y.at({0, 0, 0, 1}) == 2.0f);
    REQUIRE(y.at({0, 0, 1, 0}) == 3.0f);
    REQUIRE(y.at({0, 0, 1, 1}) == 4.0f);
}

TEST_CASE("pixel_shuffle: index oracle, constant and errors", "[ops][shuffle]") {
    auto x = random_tensor({2, 8, 3, 2}, 307, -1.0f, 1.0f);
    auto y = psrg::pixel_shuffle_upsample(x, 2);
    REQUIRE(y.shape() == psrg::Shape{2, 2, 6, 4});
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t c = 0; c < 2; ++c)
            for (int64_t yy = 0; yy < 3; ++yy)
                for (int64_t xx = 0; xx < 2; ++xx)
                    for (int64_t i = 0; i < 2; ++i)
                        for (int64_t j = 0; j < 2; ++j)
                            REQUIRE(y.at({n, c, yy * 2 + i, xx * 2 + j}) ==
                                    x.at({n, c * 4 + i * 2 + j, yy, xx}));

    Tensor flat({1, 4, 2, 2}, 0.25f);
    auto yc = psrg::pixel_shuffle_upsample(flat, 2);
    for (int64_t i = 0; i < yc.numel(); ++i) REQUIRE(yc[i] == 0.25f);

    REQUIRE_THROWS_AS(psrg::pixel_shuffle_upsample(Tensor({1, 3, 2, 2}, 0.0f), 2),
                      psrg::ShapeError);
    REQUIRE_THROWS_AS(psrg::pixel_shuffle_upsample(Tensor({1, 4, 2, 2}, 0.0f), 0),
                      psrg::ConfigError);
    auto r1 = psrg::pixel_shuffle_upsample(flat, 1);
    REQUIRE(oracle::bitwise_equal(r1, flat));
}

TEST_CASE("activations: exact values and clamp gradients", "[ops][activation]") {
    Tensor x({3}, {-1.0f, 0.0f, 2.0f});
    auto r = psrg::relu(x);
    REQUIRE(r[0] == 0.0f);
    REQUIRE(r[1] == 0.0f);
    REQUIRE(r[2] == 2.0f);

    auto l = psrg::leaky_relu(x);
    REQUIRE(l[0] == -0.2f);
    REQUIRE(l[2] == 2.0f);
    auto l2 = psrg::leaky_relu(x, 0.1f);
    REQUIRE(std::fabs(l2[0] + 0.1f) < 1e-7f);

    Tensor z({3}, {0.0f, -100.0f, 100.0f});
    auto s = psrg::sigmoid(z);
    REQUIRE(s[0] == 0.5f);
    REQUIRE(s[1] >= 0.0f);
    REQUIRE(s[1] < 1e-20f);
    REQUIRE(std::fabs(s[2] - 1.0f) < 1e-6f);

    Tensor c({3}, {-0.5f, 0.3f, 1.7f});
    c.set_requires_grad(true);
    auto cl = psrg::clamp01(c);
    REQUIRE(cl[0] == 0.0f);
    REQUIRE(cl[1] == 0.3f);
    REQUIRE(cl[2] == 1.0f);
    psrg::sum(cl).backward();
    const auto& g = c.grad_values();
    REQUIRE(g[0] == 0.0f);
    REQUIRE(g[1] == 1.0f);
    REQUIRE(g[2] == 0.0f);

    REQUIRE(oracle::bitwise_equal(psrg::activation(x, psrg::ActKind::relu), psrg::relu(x)));
}

TEST_CASE("row_sum: per-row totals", "[ops]") {
    Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
    auto y = psrg::row_sum(x);
    REQUIRE(y.shape() == psrg::Shape{2, 1});
    REQUIRE(y[0] == 6.0f);
    REQUIRE(y[1] == 15.0f);
    REQUIRE_THROWS_AS(psrg::row_sum(Tensor({3}, 0.0f)), psrg::ShapeError);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged", "[ops][adam]") {
    psrg::ParamSet ps;
    ps.add_param("w", random_tensor({4}, 401, -1.0f, 1.0f));
    auto before = ps.param("w").detach();
    auto st = psrg::AdamState::init(ps);
    auto loss = psrg::sum(ps.param("w") * Tensor({4}, 0.0f));
    loss.backward();
    psrg::adam_step(ps, st, 0.01f);
    REQUIRE(oracle::bitwise_equal(ps.param("w"), before));
    REQUIRE(st.t == 1);
}

TEST_CASE("adam: first step moves by about lr against the gradient sign", "[ops][adam]") {
    psrg::ParamSet ps;
    Tensor w({4}, {0.5f, -0.5f, 1.0f, -1.0f});
    auto before = w.detach();
    ps.add_param("w", w);
    auto st = psrg::AdamState::init(ps);
    Tensor dir({4}, {2.0f, -3.0f, 0.5f, 1.5f});
    auto loss = psrg::sum(ps.param("w") * dir);
    loss.backward();
    const float lr = 0.01f;
    psrg::adam_step(ps, st, lr);
    for (int64_t i = 0; i < 4; ++i) {
        const float step = ps.param("w")[i] - before[i];
        const float want = dir[i] > 0 ? -lr : lr;
        REQUIRE(std::fabs(step - want) < 1e-5f);
    }
}

TEST_CASE("adam: same seed gives identical 100-step trajectories", "[ops][adam]") {
    auto run = [] {
        psrg::ParamSet ps;
        ps.add_param("w", random_tensor({8}, 417, -1.0f, 1.0f));
        auto st = psrg::AdamState::init(ps);
        Rng rng(99);
        for (int i = 0; i < 100; ++i) {
            ps.zero_grad();
            auto noise = Tensor::randn({8}, rng, 0.5f);
            auto loss = psrg::sum(psrg::square(ps.param("w") - noise));
            loss.backward();
            psrg::adam_step(ps, st, 1e-3f);
        }
        return ps.param("w").detach();
    };
    auto a = run();
    auto b = run();
    REQUIRE(oracle::bitwise_equal(a, b));
}

TEST_CASE("adam: contract violations are reported", "[ops][adam]") {
    psrg::ParamSet ps;
    ps.add_param("w", Tensor({2}, 0.5f));
    auto st = psrg::AdamState::init(ps);
    SECTION("missing gradient") {
        REQUIRE_THROWS_AS(psrg::adam_step(ps, st, 1e-3f), psrg::ContractError);
    }
    SECTION("frozen parameter") {
        psrg::sum(ps.param("w")).backward();
        ps.set_trainable(false);
        REQUIRE_THROWS_AS(psrg::adam_step(ps, st, 1e-3f), psrg::ContractError);
    }
    SECTION("duplicate parameter name") {
        REQUIRE_THROWS_AS(ps.add_param("w", Tensor({2}, 0.0f)), psrg::ConfigError);
    }
    SECTION("unknown parameter name") {
        REQUIRE_THROWS_AS(ps.param("nope"), psrg::ConfigError);
    }
}

TEST_CASE("composite graph: conv-bn-relu-dense chain passes finite differences",
          "[ops][autodiff]") {
    using psrg::detail::seeded_uniform;
    auto x = seeded_uniform({2, 2, 6, 6}, 901, -1, 1);
    auto w = seeded_uniform({3, 2, 3, 3}, 902, -0.5, 0.5);
    auto b = seeded_uniform({3}, 903, -0.2, 0.2);
    auto gamma = seeded_uniform({3}, 904, 0.5, 1.5);
    auto beta = seeded_uniform({3}, 905, -0.3, 0.3);
    auto rm = seeded_uniform({3}, 906, -0.2, 0.2);
    auto rv = seeded_uniform({3}, 907, 0.8, 1.2);
    DTensor rc = DTensor::full({1}, 5.0);
    auto dw = seeded_uniform({108, 4}, 908, -0.3, 0.3);
    auto db = seeded_uniform({4}, 909, -0.2, 0.2);
    psrg::GradCheckOptions opt;
    opt.max_coords = 10;
    const double err = psrg::detail::fd_max_rel_err(
        {&x, &w, &b, &gamma, &beta, &dw, &db},
        [&] {
            auto h = psrg::conv2d(x, w, b, 1, 1);
            h = psrg::batch_norm(h, gamma, beta, rm, rv, rc, false);
            h = psrg::relu(h);
            auto flat = psrg::flatten_batch(h);
            return psrg::sum(psrg::dense(flat, dw, db));
        },
        opt);
    REQUIRE(err < 1e-4);
}
