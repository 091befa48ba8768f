#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "losses.hpp"
#include "models.hpp"
#include "ops.hpp"
#include "tensor.hpp"

namespace psrg {

// Central finite-difference verification of the tape. Everything here runs in
// double so the difference quotient itself is trustworthy at h = 1e-4, and
// every check seeds its own inputs, keeping the suite deterministic. The step
// is kept this small because network checks probe through ReLU-family kinks;
// a wider interval is likely to straddle one and corrupt the quotient.

using DTensor = TensorT<double>;

struct GradCheckOptions {
    double h = 1e-4;
    // Relative error uses max(|analytic|, |numeric|, floor) as denominator so
    // near-zero gradients are judged on absolute error.
    double floor = 0.1;
    // Cap on probed coordinates per leaf; -1 probes all of them. Network
    // checks sample, elementwise ops are probed exhaustively.
    int max_coords = -1;
    uint64_t seed = 20240811;
};

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

namespace detail {

// Runs f once with the tape on to collect analytic gradients of `leaves`,
// then probes coordinates with central differences of the value alone.
inline double fd_max_rel_err(std::vector<DTensor*> leaves, const std::function<DTensor()>& f,
                             const GradCheckOptions& opt) {
    for (auto* leaf : leaves) {
        leaf->set_requires_grad(true);
        leaf->zero_grad();
    }
    auto loss = f();
    if (loss.numel() != 1) throw ContractError("gradcheck: loss must be scalar");
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto* leaf : leaves) analytic.push_back(leaf->grad_values());

    double worst = 0.0;
    Rng pick(opt.seed ^ 0xfd15ULL);
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        DTensor& x = *leaves[li];
        const int64_t n = x.numel();
        std::vector<int64_t> coords;
        if (opt.max_coords < 0 || n <= opt.max_coords) {
            coords.resize(static_cast<std::size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            for (auto i : pick.sample_without_replacement(static_cast<std::size_t>(n),
                                                          static_cast<std::size_t>(opt.max_coords)))
                coords.push_back(static_cast<int64_t>(i));
        }
        NoGradGuard ng;
        for (int64_t i : coords) {
            const double v0 = x.data()[i];
            x.data()[i] = v0 + opt.h;
            const double up = f().item();
            x.data()[i] = v0 - opt.h;
            const double dn = f().item();
            x.data()[i] = v0;
            const double fd = (up - dn) / (2.0 * opt.h);
            const double an = analytic[li][static_cast<std::size_t>(i)];
            const double denom = std::max({std::fabs(an), std::fabs(fd), opt.floor});
            worst = std::max(worst, std::fabs(an - fd) / denom);
        }
    }
    return worst;
}

// Reduces a non-scalar output to a scalar through fixed random weights, so
// every output coordinate's gradient participates.
inline DTensor weighted_sum(const DTensor& out, uint64_t seed) {
    Rng rng(seed);
    auto w = DTensor::rand_uniform(out.shape(), rng, 0.25, 1.0);
    return sum(out * w);
}

inline DTensor seeded_uniform(const Shape& shape, uint64_t seed, double lo, double hi) {
    Rng rng(seed);
    return DTensor::rand_uniform(shape, rng, lo, hi);
}

// Values bounded away from zero on both sides, for kinked activations.
inline DTensor seeded_signed(const Shape& shape, uint64_t seed, double lo, double hi) {
    Rng rng(seed);
    DTensor t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) {
        const double mag = rng.uniform(lo, hi);
        t.data()[i] = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

}  // namespace detail

struct GradCheck {
    std::string name;
    std::function<double(const GradCheckOptions&)> run;
};

// Deliberately wrong backward rule (gradient scaled by 1.02), used as the
// suite's negative control: if this passes, the harness is not looking.
inline DTensor broken_scale_op(const DTensor& a) {
    std::vector<double> out(a.values());
    for (auto& v : out) v *= 3.0;
    auto an = a.node();
    return DTensor::make_op(a.shape(), std::move(out), {a}, [an](TensorNodeT<double>& self) {
        double* ga = an->acc();
        for (std::size_t i = 0; i < self.value.size(); ++i) ga[i] += self.grad[i] * 3.0 * 1.02;
    });
}

inline std::vector<GradCheck> gradcheck_suite(bool inject_broken = false) {
    using detail::seeded_signed;
    using detail::seeded_uniform;
    using detail::weighted_sum;
    std::vector<GradCheck> suite;
    auto add = [&suite](std::string name, std::function<double(const GradCheckOptions&)> run) {
        suite.push_back({std::move(name), std::move(run)});
    };

    add("add", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({2, 3, 4}, o.seed + 1, -1, 1);
        auto b = seeded_uniform({2, 3, 4}, o.seed + 2, -1, 1);
        return detail::fd_max_rel_err({&a, &b}, [&] { return weighted_sum(a + b, o.seed + 3); }, o);
    });
    add("sub", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({3, 5}, o.seed + 4, -1, 1);
        auto b = seeded_uniform({3, 5}, o.seed + 5, -1, 1);
        return detail::fd_max_rel_err({&a, &b}, [&] { return weighted_sum(a - b, o.seed + 6); }, o);
    });
    add("mul", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({4, 4}, o.seed + 7, -1.5, 1.5);
        auto b = seeded_uniform({4, 4}, o.seed + 8, -1.5, 1.5);
        return detail::fd_max_rel_err({&a, &b}, [&] { return weighted_sum(a * b, o.seed + 9); }, o);
    });
    add("scalar_mul", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({2, 6}, o.seed + 10, -1, 1);
        return detail::fd_max_rel_err({&a}, [&] { return weighted_sum(a * 0.7, o.seed + 11); }, o);
    });
    add("add_scalar", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({7}, o.seed + 12, -1, 1);
        return detail::fd_max_rel_err({&a}, [&] { return weighted_sum(add_scalar(a, 0.3), o.seed + 13); }, o);
    });
    add("rsub_scalar", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({7}, o.seed + 14, -1, 1);
        return detail::fd_max_rel_err({&a}, [&] { return weighted_sum(rsub_scalar(1.0, a), o.seed + 15); }, o);
    });
    add("square", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({3, 4}, o.seed + 16, -1.5, 1.5);
        return detail::fd_max_rel_err({&a}, [&] { return weighted_sum(square(a), o.seed + 17); }, o);
    });
    add("sum", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({5, 3}, o.seed + 18, -1, 1);
        return detail::fd_max_rel_err({&a}, [&] { return sum(a); }, o);
    });
    add("mean", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({6, 2}, o.seed + 19, -1, 1);
        return detail::fd_max_rel_err({&a}, [&] { return mean(a); }, o);
    });
    add("log_clamped", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({9}, o.seed + 20, 0.2, 2.0);
        return detail::fd_max_rel_err({&a}, [&] { return weighted_sum(log_clamped(a), o.seed + 21); }, o);
    });
    add("reshape", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({2, 3, 4}, o.seed + 22, -1, 1);
        return detail::fd_max_rel_err(
            {&a}, [&] { return weighted_sum(reshape(a, {4, 6}), o.seed + 23); }, o);
    });
    add("relu", [](const GradCheckOptions& o) {
        auto a = seeded_signed({4, 5}, o.seed + 24, 0.2, 1.5);
        return detail::fd_max_rel_err({&a}, [&] { return weighted_sum(relu(a), o.seed + 25); }, o);
    });
    add("leaky_relu", [](const GradCheckOptions& o) {
        auto a = seeded_signed({4, 5}, o.seed + 26, 0.2, 1.5);
        return detail::fd_max_rel_err(
            {&a}, [&] { return weighted_sum(leaky_relu(a, 0.2), o.seed + 27); }, o);
    });
    add("sigmoid", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({4, 5}, o.seed + 28, -3, 3);
        return detail::fd_max_rel_err({&a}, [&] { return weighted_sum(sigmoid(a), o.seed + 29); }, o);
    });
    add("clamp01", [](const GradCheckOptions& o) {
        // Mix of interior points and points clamped well past both rails;
        // nothing near a kink at the probe scale.
        Rng rng(o.seed + 30);
        DTensor a({12});
        for (int64_t i = 0; i < 12; ++i) {
            const int bucket = static_cast<int>(rng.uniform_int(3));
            a.data()[i] = bucket == 0 ? rng.uniform(0.1, 0.9)
                                      : bucket == 1 ? rng.uniform(1.2, 1.8) : rng.uniform(-0.8, -0.2);
        }
        return detail::fd_max_rel_err({&a}, [&] { return weighted_sum(clamp01(a), o.seed + 31); }, o);
    });
    add("row_sum", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({3, 7}, o.seed + 32, -1, 1);
        return detail::fd_max_rel_err({&a}, [&] { return weighted_sum(row_sum(a), o.seed + 33); }, o);
    });
    add("conv2d_s1", [](const GradCheckOptions& o) {
        auto x = seeded_uniform({2, 3, 5, 5}, o.seed + 34, -1, 1);
        auto w = seeded_uniform({4, 3, 3, 3}, o.seed + 35, -0.5, 0.5);
        auto b = seeded_uniform({4}, o.seed + 36, -0.5, 0.5);
        return detail::fd_max_rel_err(
            {&x, &w, &b}, [&] { return weighted_sum(conv2d(x, w, b, 1, 1), o.seed + 37); }, o);
    });
    add("conv2d_s2", [](const GradCheckOptions& o) {
        auto x = seeded_uniform({1, 2, 7, 6}, o.seed + 38, -1, 1);
        auto w = seeded_uniform({3, 2, 3, 3}, o.seed + 39, -0.5, 0.5);
        auto b = seeded_uniform({3}, o.seed + 40, -0.5, 0.5);
        return detail::fd_max_rel_err(
            {&x, &w, &b}, [&] { return weighted_sum(conv2d(x, w, b, 2, 1), o.seed + 41); }, o);
    });
    add("dense", [](const GradCheckOptions& o) {
        auto x = seeded_uniform({3, 6}, o.seed + 42, -1, 1);
        auto w = seeded_uniform({6, 4}, o.seed + 43, -0.5, 0.5);
        auto b = seeded_uniform({4}, o.seed + 44, -0.5, 0.5);
        return detail::fd_max_rel_err(
            {&x, &w, &b}, [&] { return weighted_sum(dense(x, w, b), o.seed + 45); }, o);
    });
    add("batch_norm_train", [](const GradCheckOptions& o) {
        auto x = seeded_uniform({2, 3, 4, 4}, o.seed + 46, -1, 1);
        auto g = seeded_uniform({3}, o.seed + 47, 0.5, 1.5);
        auto b = seeded_uniform({3}, o.seed + 48, -0.5, 0.5);
        DTensor rm({3}), rv = DTensor::full({3}, 1.0), rc({1});
        return detail::fd_max_rel_err(
            {&x, &g, &b},
            [&] { return weighted_sum(batch_norm(x, g, b, rm, rv, rc, true), o.seed + 49); }, o);
    });
    add("batch_norm_eval", [](const GradCheckOptions& o) {
        auto x = seeded_uniform({2, 3, 4, 4}, o.seed + 50, -1, 1);
        auto g = seeded_uniform({3}, o.seed + 51, 0.5, 1.5);
        auto b = seeded_uniform({3}, o.seed + 52, -0.5, 0.5);
        auto rm = seeded_uniform({3}, o.seed + 53, -0.3, 0.3);
        auto rv = seeded_uniform({3}, o.seed + 54, 0.5, 1.5);
        DTensor rc = DTensor::full({1}, 4.0);
        return detail::fd_max_rel_err(
            {&x, &g, &b},
            [&] { return weighted_sum(batch_norm(x, g, b, rm, rv, rc, false), o.seed + 55); }, o);
    });
    add("pixel_shuffle", [](const GradCheckOptions& o) {
        auto x = seeded_uniform({2, 8, 3, 3}, o.seed + 56, -1, 1);
        return detail::fd_max_rel_err(
            {&x}, [&] { return weighted_sum(pixel_shuffle_upsample(x, 2), o.seed + 57); }, o);
    });
    add("mse_loss", [](const GradCheckOptions& o) {
        auto sr = seeded_uniform({2, 1, 4, 4}, o.seed + 58, 0.1, 0.9);
        auto hr = seeded_uniform({2, 1, 4, 4}, o.seed + 59, 0.1, 0.9);
        return detail::fd_max_rel_err({&sr, &hr}, [&] { return mse_loss(sr, hr); }, o);
    });
    add("feature_loss", [](const GradCheckOptions& o) {
        auto ex = make_feature_extractor<double>(1, o.seed + 60, 2);
        auto sr = seeded_uniform({1, 1, 8, 8}, o.seed + 61, 0.1, 0.9);
        auto hr = seeded_uniform({1, 1, 8, 8}, o.seed + 62, 0.1, 0.9);
        LossWeights w;
        return detail::fd_max_rel_err({&sr}, [&] { return feature_loss(sr, hr, ex, w); }, o);
    });
    add("adversarial_gen_loss", [](const GradCheckOptions& o) {
        auto d = seeded_uniform({4, 1}, o.seed + 63, 0.15, 0.85);
        return detail::fd_max_rel_err({&d}, [&] { return adversarial_gen_loss(d); }, o);
    });
    add("discriminator_loss", [](const GradCheckOptions& o) {
        auto dr = seeded_uniform({4, 1}, o.seed + 64, 0.15, 0.85);
        auto df = seeded_uniform({4, 1}, o.seed + 65, 0.15, 0.85);
        return detail::fd_max_rel_err({&dr, &df}, [&] { return discriminator_loss(dr, df); }, o);
    });
    add("triplet_loss_literal", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({2, 1, 4, 4}, o.seed + 66, 0.2, 0.8);
        auto p = seeded_uniform({2, 1, 4, 4}, o.seed + 67, 0.2, 0.8);
        auto n = seeded_uniform({2, 1, 4, 4}, o.seed + 68, 0.2, 0.8);
        LossWeights w;
        w.triplet_mode = TripletMode::literal;
        return detail::fd_max_rel_err({&a, &p, &n}, [&] { return triplet_loss(a, p, n, w); }, o);
    });
    add("triplet_loss_hinged", [](const GradCheckOptions& o) {
        auto a = seeded_uniform({2, 1, 4, 4}, o.seed + 69, 0.2, 0.8);
        auto p = seeded_uniform({2, 1, 4, 4}, o.seed + 70, 0.2, 0.8);
        auto n = seeded_uniform({2, 1, 4, 4}, o.seed + 71, 0.2, 0.8);
        LossWeights w;
        // Large margin keeps every hinge active and far from its kink, so the
        // full gradient path is exercised.
        w.triplet_margin = 25.0;
        return detail::fd_max_rel_err({&a, &p, &n}, [&] { return triplet_loss(a, p, n, w); }, o);
    });
    add("stage_loss", [](const GradCheckOptions& o) {
        auto ex = make_feature_extractor<double>(1, o.seed + 72, 2);
        auto sr = seeded_uniform({1, 1, 8, 8}, o.seed + 73, 0.1, 0.9);
        auto hr = seeded_uniform({1, 1, 8, 8}, o.seed + 74, 0.1, 0.9);
        auto prev = seeded_uniform({1, 1, 4, 4}, o.seed + 75, 0.1, 0.9);
        auto d = seeded_uniform({1, 1}, o.seed + 76, 0.2, 0.8);
        LossWeights w;
        w.triplet_margin = 25.0;
        return detail::fd_max_rel_err(
            {&sr, &d}, [&] { return stage_loss(2, sr, prev, hr, d, ex, w).total; }, o);
    });
    add("generator_network", [](const GradCheckOptions& o) {
        GeneratorConfig cfg;
        cfg.input_channels = 1;
        cfg.base_channels = 8;
        cfg.num_residual_blocks = 1;
        auto g = build_generator<double>(cfg, o.seed + 77);
        auto x = seeded_uniform({1, 1, 8, 8}, o.seed + 78, 0.1, 0.9);
        std::vector<DTensor*> leaves{&x};
        for (auto& [name, t] : g.params.params) leaves.push_back(&t);
        GradCheckOptions local = o;
        local.max_coords = 6;
        return detail::fd_max_rel_err(
            leaves, [&] { return weighted_sum(generator_forward(g, x, true), o.seed + 79); }, local);
    });
    add("discriminator_network", [](const GradCheckOptions& o) {
        DiscriminatorConfig cfg;
        cfg.input_channels = 1;
        cfg.input_size = 8;
        cfg.channel_ladder = {{4, 1}, {4, 2}, {8, 1}};
        cfg.dense_width = 8;
        auto d = build_discriminator<double>(cfg, o.seed + 80);
        auto x = seeded_uniform({2, 1, 8, 8}, o.seed + 81, 0.1, 0.9);
        std::vector<DTensor*> leaves{&x};
        for (auto& [name, t] : d.params.params) leaves.push_back(&t);
        GradCheckOptions local = o;
        local.max_coords = 6;
        return detail::fd_max_rel_err(
            leaves, [&] { return weighted_sum(discriminator_forward(d, x, true), o.seed + 82); },
            local);
    });

    if (inject_broken) {
        add("broken_fixture", [](const GradCheckOptions& o) {
            auto a = seeded_uniform({5}, o.seed + 83, -1, 1);
            return detail::fd_max_rel_err(
                {&a}, [&] { return weighted_sum(broken_scale_op(a), o.seed + 84); }, o);
        });
    }
    return suite;
}

// Runs the suite and prints one line per op. Returns the results; overall
// pass means every op's max relative error stayed under `tolerance`.
inline std::vector<GradCheckResult> run_gradchecks(const GradCheckOptions& opt = {},
                                                   bool inject_broken = false,
                                                   double tolerance = 1e-4,
                                                   std::FILE* out = stdout) {
    std::vector<GradCheckResult> results;
    for (const auto& check : gradcheck_suite(inject_broken)) {
        GradCheckResult r;
        r.name = check.name;
        r.max_rel_err = check.run(opt);
        r.pass = r.max_rel_err < tolerance;
        if (out)
            std::fprintf(out, "%-24s max_rel_err=%.3e %s\n", r.name.c_str(), r.max_rel_err,
                         r.pass ? "pass" : "FAIL");
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace psrg
