#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tensor.hpp"

namespace psrg {

namespace detail {

// Catmull-Rom cubic kernel (a = -0.5), evaluated at non-negative distance.
inline double cubic_kernel(double x) {
    if (x < 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
    if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
    return 0.0;
}

struct Taps {
    std::vector<std::array<int, 4>> idx;
    std::vector<std::array<double, 4>> w;
    int count = 0;  // taps per output sample: 2 bilinear, 4 bicubic
};

// Center-aligned sampling: output pixel o reads source position
// (o + 0.5) * in/out - 0.5, with out-of-range taps replicated from the edge.
inline Taps make_taps(int64_t in, int64_t out, bool cubic) {
    Taps t;
    t.count = cubic ? 4 : 2;
    t.idx.resize(static_cast<std::size_t>(out));
    t.w.resize(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (int64_t o = 0; o < out; ++o) {
        const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        const double base = std::floor(src);
        const double frac = src - base;
        std::array<int, 4> idx{};
        std::array<double, 4> w{};
        if (cubic) {
            w = {cubic_kernel(frac + 1.0), cubic_kernel(frac), cubic_kernel(1.0 - frac),
                 cubic_kernel(2.0 - frac)};
            for (int k = 0; k < 4; ++k) {
                int64_t i = static_cast<int64_t>(base) - 1 + k;
                idx[static_cast<std::size_t>(k)] = static_cast<int>(std::min(in - 1, std::max<int64_t>(0, i)));
            }
        } else {
            w = {1.0 - frac, frac, 0.0, 0.0};
            for (int k = 0; k < 2; ++k) {
                int64_t i = static_cast<int64_t>(base) + k;
                idx[static_cast<std::size_t>(k)] = static_cast<int>(std::min(in - 1, std::max<int64_t>(0, i)));
            }
        }
        double sum = 0.0;
        for (int k = 0; k < t.count; ++k) sum += w[static_cast<std::size_t>(k)];
        for (int k = 0; k < t.count; ++k) w[static_cast<std::size_t>(k)] /= sum;
        t.idx[static_cast<std::size_t>(o)] = idx;
        t.w[static_cast<std::size_t>(o)] = w;
    }
    return t;
}

// Separable resampling core over the last two dims of a [P, H, W] view.
template <typename S>
std::vector<S> resample_planes(const S* src, int64_t P, int64_t H, int64_t W, int64_t OH, int64_t OW,
                               bool cubic, bool clamp_unit) {
    const Taps tx = make_taps(W, OW, cubic);
    const Taps ty = make_taps(H, OH, cubic);
    std::vector<double> mid(static_cast<std::size_t>(H * OW));
    std::vector<S> out(static_cast<std::size_t>(P * OH * OW));
    for (int64_t p = 0; p < P; ++p) {
        const S* plane = src + p * H * W;
        for (int64_t y = 0; y < H; ++y) {
            const S* row = plane + y * W;
            double* mrow = mid.data() + y * OW;
            for (int64_t x = 0; x < OW; ++x) {
                const auto& idx = tx.idx[static_cast<std::size_t>(x)];
                const auto& w = tx.w[static_cast<std::size_t>(x)];
                double acc = 0.0;
                for (int k = 0; k < tx.count; ++k)
                    acc += w[static_cast<std::size_t>(k)] * static_cast<double>(row[idx[static_cast<std::size_t>(k)]]);
                mrow[x] = acc;
            }
        }
        S* oplane = out.data() + p * OH * OW;
        for (int64_t y = 0; y < OH; ++y) {
            const auto& idx = ty.idx[static_cast<std::size_t>(y)];
            const auto& w = ty.w[static_cast<std::size_t>(y)];
            S* orow = oplane + y * OW;
            for (int64_t x = 0; x < OW; ++x) {
                double acc = 0.0;
                for (int k = 0; k < ty.count; ++k)
                    acc += w[static_cast<std::size_t>(k)] * mid[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)] * OW + x)];
                if (clamp_unit) acc = std::min(1.0, std::max(0.0, acc));
                orow[x] = static_cast<S>(acc);
            }
        }
    }
    return out;
}

template <typename S>
TensorT<S> resample_spatial(const TensorT<S>& img, int64_t oh, int64_t ow, bool cubic, bool clamp_unit) {
    if (img.rank() != 3 && img.rank() != 4)
        throw ShapeError("resample: expected [C,H,W] or [N,C,H,W], got " + shape_str(img.shape()));
    if (oh < 1 || ow < 1) throw ShapeError("resample: output dims must be >= 1");
    const int64_t H = img.dim(img.rank() - 2);
    const int64_t W = img.dim(img.rank() - 1);
    const int64_t P = img.numel() / (H * W);
    Shape out_shape = img.shape();
    out_shape[out_shape.size() - 2] = oh;
    out_shape[out_shape.size() - 1] = ow;
    return TensorT<S>(out_shape, resample_planes(img.data(), P, H, W, oh, ow, cubic, clamp_unit));
}

}  // namespace detail

// Catmull-Rom bicubic resampling of the spatial dims by a rational factor.
// Works on values only (no tape); output is clamped to [0,1] because the
// negative kernel lobes can overshoot the input range.
template <typename S>
TensorT<S> bicubic_resample(const TensorT<S>& img, double factor) {
    if (!(factor > 0.0)) throw ConfigError("bicubic_resample: factor must be > 0");
    const int64_t H = img.dim(img.rank() - 2);
    const int64_t W = img.dim(img.rank() - 1);
    const int64_t oh = std::llround(static_cast<double>(H) * factor);
    const int64_t ow = std::llround(static_cast<double>(W) * factor);
    return detail::resample_spatial(img, oh, ow, true, true);
}

template <typename S>
TensorT<S> bicubic_resample_to(const TensorT<S>& img, int64_t oh, int64_t ow) {
    return detail::resample_spatial(img, oh, ow, true, true);
}

// Bilinear counterpart, used as the reference upscaling baseline.
template <typename S>
TensorT<S> bilinear_resample(const TensorT<S>& img, double factor) {
    if (!(factor > 0.0)) throw ConfigError("bilinear_resample: factor must be > 0");
    const int64_t H = img.dim(img.rank() - 2);
    const int64_t W = img.dim(img.rank() - 1);
    const int64_t oh = std::llround(static_cast<double>(H) * factor);
    const int64_t ow = std::llround(static_cast<double>(W) * factor);
    return detail::resample_spatial(img, oh, ow, false, false);
}

// Separable Gaussian blur with edge replication. The kernel is positive and
// normalized, so outputs stay inside the input's value hull.
template <typename S>
TensorT<S> gaussian_blur(const TensorT<S>& img, double sigma) {
    if (img.rank() != 3 && img.rank() != 4)
        throw ShapeError("gaussian_blur: expected [C,H,W] or [N,C,H,W]");
    if (sigma <= 0.0) return img.detach();
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& v : k) v /= sum;

    const int64_t H = img.dim(img.rank() - 2);
    const int64_t W = img.dim(img.rank() - 1);
    const int64_t P = img.numel() / (H * W);
    const S* src = img.data();
    std::vector<double> mid(static_cast<std::size_t>(H * W));
    std::vector<S> out(static_cast<std::size_t>(img.numel()));
    for (int64_t p = 0; p < P; ++p) {
        const S* plane = src + p * H * W;
        for (int64_t y = 0; y < H; ++y) {
            const S* row = plane + y * W;
            double* mrow = mid.data() + y * W;
            for (int64_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int64_t xi = std::min(W - 1, std::max<int64_t>(0, x + i));
                    acc += k[static_cast<std::size_t>(i + radius)] * static_cast<double>(row[xi]);
                }
                mrow[x] = acc;
            }
        }
        S* oplane = out.data() + p * H * W;
        for (int64_t y = 0; y < H; ++y) {
            S* orow = oplane + y * W;
            for (int64_t x = 0; x < W; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int64_t yi = std::min(H - 1, std::max<int64_t>(0, y + i));
                    acc += k[static_cast<std::size_t>(i + radius)] * mid[static_cast<std::size_t>(yi * W + x)];
                }
                orow[x] = static_cast<S>(acc);
            }
        }
    }
    return TensorT<S>(img.shape(), std::move(out));
}

}  // namespace psrg
