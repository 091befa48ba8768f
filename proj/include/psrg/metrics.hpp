#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "tensor.hpp"

namespace psrg {

// Peak signal-to-noise ratio in dB, double-precision MSE, capped at 100 dB
// (the sentinel for identical images).
inline double psnr(const Tensor& a, const Tensor& b, double max_val = 1.0) {
    assert_same_shape(a, b, "psnr");
    const float* pa = a.data();
    const float* pb = b.data();
    double mse = 0.0;
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(n);
    if (mse == 0.0) return 100.0;
    const double v = 10.0 * std::log10(max_val * max_val / mse);
    return std::min(100.0, v);
}

namespace detail {

inline const std::array<double, 11 * 11>& ssim_window() {
    static const std::array<double, 11 * 11> w = [] {
        std::array<double, 11 * 11> win{};
        const double sigma = 1.5;
        double sum = 0.0;
        for (int y = 0; y < 11; ++y) {
            for (int x = 0; x < 11; ++x) {
                const double dy = y - 5, dx = x - 5;
                const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
                win[static_cast<std::size_t>(y * 11 + x)] = v;
                sum += v;
            }
        }
        for (auto& v : win) v /= sum;
        return win;
    }();
    return w;
}

inline double ssim_plane(const float* a, const float* b, int64_t H, int64_t W) {
    const auto& win = ssim_window();
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    int64_t count = 0;
    for (int64_t y = 0; y + 11 <= H; ++y) {
        for (int64_t x = 0; x + 11 <= W; ++x) {
            double mua = 0.0, mub = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
            for (int wy = 0; wy < 11; ++wy) {
                for (int wx = 0; wx < 11; ++wx) {
                    const double wv = win[static_cast<std::size_t>(wy * 11 + wx)];
                    const double va = a[(y + wy) * W + x + wx];
                    const double vb = b[(y + wy) * W + x + wx];
                    mua += wv * va;
                    mub += wv * vb;
                    saa += wv * va * va;
                    sbb += wv * vb * vb;
                    sab += wv * (va * vb);
                }
            }
            const double vara = saa - mua * mua;
            const double varb = sbb - mub * mub;
            const double cov = sab - mua * mub;
            total += ((2.0 * (mua * mub) + c1) * (2.0 * cov + c2)) /
                     ((mua * mua + mub * mub + c1) * (vara + varb + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

}  // namespace detail

// Mean local SSIM over valid 11x11 Gaussian windows (sigma 1.5,
// C1 = 0.01^2, C2 = 0.03^2 on a [0,1] range), averaged across channels.
// Every subexpression is symmetric in (a, b), so swapping the arguments
// reproduces the result bit for bit.
inline double ssim(const Tensor& a, const Tensor& b) {
    assert_same_shape(a, b, "ssim");
    const int64_t H = a.dim(a.rank() - 2), W = a.dim(a.rank() - 1);
    if (H < 11 || W < 11) throw ShapeError("ssim: image smaller than the 11x11 window");
    const int64_t P = a.numel() / (H * W);
    double total = 0.0;
    for (int64_t p = 0; p < P; ++p)
        total += detail::ssim_plane(a.data() + p * H * W, b.data() + p * H * W, H, W);
    return total / static_cast<double>(P);
}

namespace detail {

// 32-point DFT of a real 2D block via row-column passes with a precomputed
// twiddle table; returns the power spectrum.
inline void dft32_power(const std::array<double, 32 * 32>& block, std::array<double, 32 * 32>& power) {
    static const auto twiddle = [] {
        std::array<std::array<double, 32>, 64> t{};  // [k*2 .. cos|sin][n]
        for (int k = 0; k < 32; ++k) {
            for (int n = 0; n < 32; ++n) {
                const double ang = -2.0 * 3.14159265358979323846 * k * n / 32.0;
                t[static_cast<std::size_t>(2 * k)][static_cast<std::size_t>(n)] = std::cos(ang);
                t[static_cast<std::size_t>(2 * k + 1)][static_cast<std::size_t>(n)] = std::sin(ang);
            }
        }
        return t;
    }();
    std::array<double, 32 * 32> rre{}, rim{};
    for (int y = 0; y < 32; ++y) {
        for (int k = 0; k < 32; ++k) {
            double re = 0.0, im = 0.0;
            for (int n = 0; n < 32; ++n) {
                const double v = block[static_cast<std::size_t>(y * 32 + n)];
                re += v * twiddle[static_cast<std::size_t>(2 * k)][static_cast<std::size_t>(n)];
                im += v * twiddle[static_cast<std::size_t>(2 * k + 1)][static_cast<std::size_t>(n)];
            }
            rre[static_cast<std::size_t>(y * 32 + k)] = re;
            rim[static_cast<std::size_t>(y * 32 + k)] = im;
        }
    }
    for (int kx = 0; kx < 32; ++kx) {
        for (int ky = 0; ky < 32; ++ky) {
            double re = 0.0, im = 0.0;
            for (int n = 0; n < 32; ++n) {
                const double cr = twiddle[static_cast<std::size_t>(2 * ky)][static_cast<std::size_t>(n)];
                const double ci = twiddle[static_cast<std::size_t>(2 * ky + 1)][static_cast<std::size_t>(n)];
                const double vr = rre[static_cast<std::size_t>(n * 32 + kx)];
                const double vi = rim[static_cast<std::size_t>(n * 32 + kx)];
                re += vr * cr - vi * ci;
                im += vr * ci + vi * cr;
            }
            power[static_cast<std::size_t>(ky * 32 + kx)] = re * re + im * im;
        }
    }
}

// Spectral-slope sharpness of one 32x32 block: fit the log-log decay of the
// radially averaged power spectrum; flat spectra (small slope alpha) mean
// sharp content. Mapped through a logistic centered at alpha = 2.
inline double s1_spectral(const std::array<double, 32 * 32>& block) {
    std::array<double, 32 * 32> windowed{};
    double mean = 0.0;
    for (const double v : block) mean += v;
    mean /= (32.0 * 32.0);
    static const auto hann = [] {
        std::array<double, 32> h{};
        for (int i = 0; i < 32; ++i)
            h[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * 3.14159265358979323846 * i / 31.0);
        return h;
    }();
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            windowed[static_cast<std::size_t>(y * 32 + x)] =
                (block[static_cast<std::size_t>(y * 32 + x)] - mean) *
                hann[static_cast<std::size_t>(y)] * hann[static_cast<std::size_t>(x)];

    std::array<double, 32 * 32> power{};
    dft32_power(windowed, power);

    // Radial average over integer annuli 1..15 (DC and Nyquist excluded).
    std::array<double, 16> radial{};
    std::array<int, 16> counts{};
    for (int ky = 0; ky < 32; ++ky) {
        for (int kx = 0; kx < 32; ++kx) {
            const int fy = ky <= 16 ? ky : ky - 32;
            const int fx = kx <= 16 ? kx : kx - 32;
            const int rho = static_cast<int>(std::lround(std::sqrt(double(fy) * fy + double(fx) * fx)));
            if (rho >= 1 && rho <= 15) {
                radial[static_cast<std::size_t>(rho)] += power[static_cast<std::size_t>(ky * 32 + kx)];
                counts[static_cast<std::size_t>(rho)] += 1;
            }
        }
    }
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int n = 0;
    for (int rho = 1; rho <= 15; ++rho) {
        const double p = radial[static_cast<std::size_t>(rho)] / counts[static_cast<std::size_t>(rho)];
        if (p <= 1e-12) return 0.0;  // no measurable spectrum, treat as flat/empty
        const double lx = std::log(static_cast<double>(rho));
        const double ly = std::log(p);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) return 0.0;
    const double slope = (n * sxy - sx * sy) / denom;
    const double alpha = -slope;  // power ~ f^-alpha
    return 1.0 / (1.0 + std::exp(3.0 * (alpha - 2.0)));
}

// Local-contrast sharpness: the largest mean absolute pairwise difference
// over any 2x2 neighborhood in the block (6 pairs, each bounded by 1).
inline double s2_contrast(const std::array<double, 32 * 32>& block) {
    double best = 0.0;
    for (int y = 0; y + 1 < 32; ++y) {
        for (int x = 0; x + 1 < 32; ++x) {
            const double a = block[static_cast<std::size_t>(y * 32 + x)];
            const double b = block[static_cast<std::size_t>(y * 32 + x + 1)];
            const double c = block[static_cast<std::size_t>((y + 1) * 32 + x)];
            const double d = block[static_cast<std::size_t>((y + 1) * 32 + x + 1)];
            const double v = (std::fabs(a - b) + std::fabs(a - c) + std::fabs(a - d) +
                              std::fabs(b - c) + std::fabs(b - d) + std::fabs(c - d)) / 6.0;
            if (v > best) best = v;
        }
    }
    return best;
}

}  // namespace detail

// No-reference sharpness in [0,1]: per 32x32 block (stride 16) the geometric
// mean of spectral-slope and local-contrast cues, pooled as the mean of the
// top 1% of blocks. Color inputs are scored on Rec. 601 luma.
inline double s3_sharpness(const Tensor& img) {
    if (img.rank() != 3 && img.rank() != 2)
        throw ShapeError("s3_sharpness: expected [C,H,W] or [H,W]");
    const int64_t H = img.dim(img.rank() - 2), W = img.dim(img.rank() - 1);
    if (H < 32 || W < 32) throw ShapeError("s3_sharpness: image must be at least 32x32");
    const int64_t C = img.rank() == 3 ? img.dim(0) : 1;
    std::vector<double> luma(static_cast<std::size_t>(H * W));
    const float* p = img.data();
    if (C == 3) {
        for (int64_t i = 0; i < H * W; ++i)
            luma[static_cast<std::size_t>(i)] =
                0.299 * p[i] + 0.587 * p[H * W + i] + 0.114 * p[2 * H * W + i];
    } else {
        for (int64_t i = 0; i < H * W; ++i) luma[static_cast<std::size_t>(i)] = p[i];
    }

    std::vector<double> scores;
    for (int64_t y = 0; y + 32 <= H; y += 16) {
        for (int64_t x = 0; x + 32 <= W; x += 16) {
            std::array<double, 32 * 32> block{};
            for (int by = 0; by < 32; ++by)
                for (int bx = 0; bx < 32; ++bx)
                    block[static_cast<std::size_t>(by * 32 + bx)] =
                        luma[static_cast<std::size_t>((y + by) * W + x + bx)];
            const double s1 = detail::s1_spectral(block);
            const double s2 = detail::s2_contrast(block);
            scores.push_back(std::sqrt(s1 * s2));
        }
    }
    std::sort(scores.begin(), scores.end(), std::greater<double>());
    const std::size_t top = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(0.01 * static_cast<double>(scores.size()))));
    double acc = 0.0;
    for (std::size_t i = 0; i < top; ++i) acc += scores[i];
    return acc / static_cast<double>(top);
}

struct MetricsRow {
    std::string id;
    std::string method;
    int scale = 2;
    std::string noise = "none";
    double psnr_db = 0.0;
    double ssim = 0.0;
    double s3 = 0.0;
};

struct MetricsGroup {
    std::string method;
    int scale = 2;
    std::string noise = "none";
    int count = 0;
    double mean_psnr = 0.0, std_psnr = 0.0;
    double mean_ssim = 0.0, std_ssim = 0.0;
    double mean_s3 = 0.0, std_s3 = 0.0;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;

    void add(MetricsRow row) { rows.push_back(std::move(row)); }

    // Population mean/stddev per (method, scale, noise) group.
    std::vector<MetricsGroup> aggregate() const {
        std::map<std::tuple<std::string, int, std::string>, std::vector<const MetricsRow*>> groups;
        for (const auto& r : rows) groups[{r.method, r.scale, r.noise}].push_back(&r);
        std::vector<MetricsGroup> out;
        for (const auto& [key, members] : groups) {
            MetricsGroup g;
            g.method = std::get<0>(key);
            g.scale = std::get<1>(key);
            g.noise = std::get<2>(key);
            g.count = static_cast<int>(members.size());
            auto stats = [&](auto get, double& mean, double& sd) {
                double m = 0.0;
                for (const auto* r : members) m += get(*r);
                m /= members.size();
                double v = 0.0;
                for (const auto* r : members) v += (get(*r) - m) * (get(*r) - m);
                mean = m;
                sd = std::sqrt(v / members.size());
            };
            stats([](const MetricsRow& r) { return r.psnr_db; }, g.mean_psnr, g.std_psnr);
            stats([](const MetricsRow& r) { return r.ssim; }, g.mean_ssim, g.std_ssim);
            stats([](const MetricsRow& r) { return r.s3; }, g.mean_s3, g.std_s3);
            out.push_back(std::move(g));
        }
        return out;
    }

    // Byte-stable CSV: fixed 6-decimal formatting, rows ordered by (method, id).
    std::string to_csv() const {
        std::vector<const MetricsRow*> sorted;
        sorted.reserve(rows.size());
        for (const auto& r : rows) sorted.push_back(&r);
        std::sort(sorted.begin(), sorted.end(), [](const MetricsRow* a, const MetricsRow* b) {
            if (a->method != b->method) return a->method < b->method;
            return a->id < b->id;
        });
        std::string out = "id,method,scale,noise,psnr_db,ssim,s3\n";
        char buf[160];
        for (const auto* r : sorted) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%d,%s,%.6f,%.6f,%.6f\n", r->id.c_str(),
                          r->method.c_str(), r->scale, r->noise.c_str(), r->psnr_db, r->ssim, r->s3);
            out += buf;
        }
        return out;
    }
};

// Scores one aligned SR/HR set under a single method label and appends the
// rows to the report.
inline void evaluate(const std::vector<Tensor>& sr_set, const std::vector<Tensor>& hr_set,
                     const std::vector<std::string>& ids, const std::string& method, int scale,
                     const std::string& noise, MetricsReport& report) {
    if (sr_set.size() != hr_set.size() || sr_set.size() != ids.size())
        throw ContractError("evaluate: misaligned sr/hr/id sets");
    for (std::size_t i = 0; i < sr_set.size(); ++i) {
        MetricsRow row;
        row.id = ids[i];
        row.method = method;
        row.scale = scale;
        row.noise = noise;
        row.psnr_db = psnr(sr_set[i], hr_set[i]);
        row.ssim = ssim(sr_set[i], hr_set[i]);
        row.s3 = s3_sharpness(sr_set[i]);
        report.add(std::move(row));
    }
}

}  // namespace psrg
