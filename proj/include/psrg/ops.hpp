#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "parallel.hpp"
#include "tensor.hpp"

namespace psrg {

// Valid output-index range [lo, hi] for one kernel tap, so the hot loops can
// run branch-free over in-bounds pixels. Returns false when the range is
// empty. ix = ox*stride - pad + k must stay inside [0, in_size).
inline bool conv_span(int64_t k, int64_t pad, int64_t stride, int64_t in_size, int64_t out_size,
                      int64_t& lo, int64_t& hi) {
    const int64_t a = pad - k;
    lo = a <= 0 ? 0 : (a + stride - 1) / stride;
    const int64_t b = in_size - 1 - k + pad;
    if (b < 0) return false;
    hi = std::min(out_size - 1, b / stride);
    return lo <= hi;
}

// 2D convolution, NCHW layout, zero padding. weight is [Cout, Cin, KH, KW],
// bias is [Cout]. Output spatial size is (in + 2*pad - k) / stride + 1 with
// floor division.
template <typename S>
TensorT<S> conv2d(const TensorT<S>& input, const TensorT<S>& weight, const TensorT<S>& bias,
                  int stride = 1, int padding = 0) {
    if (input.rank() != 4) throw ShapeError("conv2d: input must be NCHW, got " + shape_str(input.shape()));
    if (weight.rank() != 4) throw ShapeError("conv2d: weight must be rank 4, got " + shape_str(weight.shape()));
    if (bias.rank() != 1) throw ShapeError("conv2d: bias must be rank 1, got " + shape_str(bias.shape()));
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
    if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");

    const int64_t N = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int64_t Cout = weight.dim(0), KH = weight.dim(2), KW = weight.dim(3);
    if (weight.dim(1) != Cin)
        throw ShapeError("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                         " input channels, input has " + std::to_string(Cin));
    if (bias.dim(0) != Cout)
        throw ShapeError("conv2d: bias size " + std::to_string(bias.dim(0)) +
                         " vs " + std::to_string(Cout) + " output channels");
    if (H + 2 * padding < KH || W + 2 * padding < KW)
        throw ShapeError("conv2d: kernel larger than padded input");
    assert_finite(input, "conv2d input");

    const int64_t s = stride, p = padding;
    const int64_t OH = (H + 2 * p - KH) / s + 1;
    const int64_t OW = (W + 2 * p - KW) / s + 1;

    std::vector<S> out(static_cast<std::size_t>(N * Cout * OH * OW));
    const S* in = input.data();
    const S* w = weight.data();
    const S* b = bias.data();

    parallel_for(static_cast<std::size_t>(N * Cout), [&](std::size_t lo_idx, std::size_t hi_idx) {
        for (std::size_t idx = lo_idx; idx < hi_idx; ++idx) {
            const int64_t n = static_cast<int64_t>(idx) / Cout;
            const int64_t co = static_cast<int64_t>(idx) % Cout;
            S* outplane = out.data() + (n * Cout + co) * OH * OW;
            std::fill(outplane, outplane + OH * OW, b[co]);
            for (int64_t ci = 0; ci < Cin; ++ci) {
                const S* inplane = in + (n * Cin + ci) * H * W;
                for (int64_t ky = 0; ky < KH; ++ky) {
                    for (int64_t kx = 0; kx < KW; ++kx) {
                        const S wv = w[((co * Cin + ci) * KH + ky) * KW + kx];
                        int64_t xlo, xhi;
                        if (!conv_span(kx, p, s, W, OW, xlo, xhi)) continue;
                        const int64_t len = xhi - xlo + 1;
                        for (int64_t oy = 0; oy < OH; ++oy) {
                            const int64_t iy = oy * s - p + ky;
                            if (iy < 0 || iy >= H) continue;
                            const S* inrow = inplane + iy * W + (xlo * s - p + kx);
                            S* orow = outplane + oy * OW + xlo;
                            if (s == 1) {
                                for (int64_t i = 0; i < len; ++i) orow[i] += wv * inrow[i];
                            } else {
                                for (int64_t i = 0; i < len; ++i) orow[i] += wv * inrow[i * s];
                            }
                        }
                    }
                }
            }
        }
    });

    auto xn = input.node();
    auto wn = weight.node();
    auto bn = bias.node();
    auto back = [xn, wn, bn, N, Cin, H, W, Cout, KH, KW, OH, OW, s, p](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        if (bn->requires_grad) {
            S* gb = bn->acc();
            for (int64_t co = 0; co < Cout; ++co) {
                S acc = S(0);
                for (int64_t n = 0; n < N; ++n) {
                    const S* gp = g + (n * Cout + co) * OH * OW;
                    for (int64_t i = 0; i < OH * OW; ++i) acc += gp[i];
                }
                gb[co] += acc;
            }
        }
        if (wn->requires_grad) {
            const S* in = xn->value.data();
            S* gw = wn->acc();
            parallel_for(static_cast<std::size_t>(Cout * Cin), [&](std::size_t lo_idx, std::size_t hi_idx) {
                for (std::size_t idx = lo_idx; idx < hi_idx; ++idx) {
                    const int64_t co = static_cast<int64_t>(idx) / Cin;
                    const int64_t ci = static_cast<int64_t>(idx) % Cin;
                    for (int64_t ky = 0; ky < KH; ++ky) {
                        for (int64_t kx = 0; kx < KW; ++kx) {
                            int64_t xlo, xhi;
                            if (!conv_span(kx, p, s, W, OW, xlo, xhi)) continue;
                            const int64_t len = xhi - xlo + 1;
                            S acc0 = S(0), acc1 = S(0), acc2 = S(0), acc3 = S(0);
                            for (int64_t n = 0; n < N; ++n) {
                                const S* gplane = g + (n * Cout + co) * OH * OW;
                                const S* inplane = in + (n * Cin + ci) * H * W;
                                for (int64_t oy = 0; oy < OH; ++oy) {
                                    const int64_t iy = oy * s - p + ky;
                                    if (iy < 0 || iy >= H) continue;
                                    const S* grow = gplane + oy * OW + xlo;
                                    const S* inrow = inplane + iy * W + (xlo * s - p + kx);
                                    if (s == 1) {
                                        int64_t i = 0;
                                        for (; i + 4 <= len; i += 4) {
                                            acc0 += grow[i] * inrow[i];
                                            acc1 += grow[i + 1] * inrow[i + 1];
                                            acc2 += grow[i + 2] * inrow[i + 2];
                                            acc3 += grow[i + 3] * inrow[i + 3];
                                        }
                                        for (; i < len; ++i) acc0 += grow[i] * inrow[i];
                                    } else {
                                        for (int64_t i = 0; i < len; ++i) acc0 += grow[i] * inrow[i * s];
                                    }
                                }
                            }
                            gw[((co * Cin + ci) * KH + ky) * KW + kx] += (acc0 + acc1) + (acc2 + acc3);
                        }
                    }
                }
            });
        }
        if (xn->requires_grad) {
            const S* w = wn->value.data();
            S* gx = xn->acc();
            parallel_for(static_cast<std::size_t>(N * Cin), [&](std::size_t lo_idx, std::size_t hi_idx) {
                for (std::size_t idx = lo_idx; idx < hi_idx; ++idx) {
                    const int64_t n = static_cast<int64_t>(idx) / Cin;
                    const int64_t ci = static_cast<int64_t>(idx) % Cin;
                    S* gxplane = gx + (n * Cin + ci) * H * W;
                    for (int64_t co = 0; co < Cout; ++co) {
                        const S* gplane = g + (n * Cout + co) * OH * OW;
                        for (int64_t ky = 0; ky < KH; ++ky) {
                            for (int64_t kx = 0; kx < KW; ++kx) {
                                const S wv = w[((co * Cin + ci) * KH + ky) * KW + kx];
                                int64_t xlo, xhi;
                                if (!conv_span(kx, p, s, W, OW, xlo, xhi)) continue;
                                const int64_t len = xhi - xlo + 1;
                                for (int64_t oy = 0; oy < OH; ++oy) {
                                    const int64_t iy = oy * s - p + ky;
                                    if (iy < 0 || iy >= H) continue;
                                    const S* grow = gplane + oy * OW + xlo;
                                    S* gxrow = gxplane + iy * W + (xlo * s - p + kx);
                                    if (s == 1) {
                                        for (int64_t i = 0; i < len; ++i) gxrow[i] += wv * grow[i];
                                    } else {
                                        for (int64_t i = 0; i < len; ++i) gxrow[i * s] += wv * grow[i];
                                    }
                                }
                            }
                        }
                    }
                }
            });
        }
    };
    return TensorT<S>::make_op({N, Cout, OH, OW}, std::move(out), {input, weight, bias}, back);
}

// Fully connected layer. input is [N, F], weight is [F, G], bias is [G];
// the output is input @ weight + bias.
template <typename S>
TensorT<S> dense(const TensorT<S>& input, const TensorT<S>& weight, const TensorT<S>& bias) {
    if (input.rank() != 2) throw ShapeError("dense: input must be [N, F], got " + shape_str(input.shape()));
    if (weight.rank() != 2) throw ShapeError("dense: weight must be [F, G], got " + shape_str(weight.shape()));
    if (bias.rank() != 1) throw ShapeError("dense: bias must be rank 1");
    const int64_t N = input.dim(0), F = input.dim(1), G = weight.dim(1);
    if (weight.dim(0) != F)
        throw ShapeError("dense: weight expects " + std::to_string(weight.dim(0)) +
                         " features, input has " + std::to_string(F));
    if (bias.dim(0) != G) throw ShapeError("dense: bias size vs output mismatch");

    std::vector<S> out(static_cast<std::size_t>(N * G));
    const S* in = input.data();
    const S* w = weight.data();
    const S* b = bias.data();
    parallel_for(static_cast<std::size_t>(N), [&](std::size_t nlo, std::size_t nhi) {
        for (std::size_t n = nlo; n < nhi; ++n) {
            const S* inrow = in + n * F;
            S* orow = out.data() + n * G;
            for (int64_t g = 0; g < G; ++g) orow[g] = b[g];
            for (int64_t f = 0; f < F; ++f) {
                const S a = inrow[f];
                const S* wrow = w + f * G;
                for (int64_t g = 0; g < G; ++g) orow[g] += a * wrow[g];
            }
        }
    });

    auto xn = input.node();
    auto wn = weight.node();
    auto bn = bias.node();
    auto back = [xn, wn, bn, N, F, G](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        if (bn->requires_grad) {
            S* gb = bn->acc();
            for (int64_t o = 0; o < G; ++o) {
                S acc = S(0);
                for (int64_t n = 0; n < N; ++n) acc += g[n * G + o];
                gb[o] += acc;
            }
        }
        if (wn->requires_grad) {
            const S* in = xn->value.data();
            S* gw = wn->acc();
            for (int64_t n = 0; n < N; ++n) {
                const S* inrow = in + n * F;
                const S* grow = g + n * G;
                for (int64_t f = 0; f < F; ++f) {
                    const S a = inrow[f];
                    S* gwrow = gw + f * G;
                    for (int64_t o = 0; o < G; ++o) gwrow[o] += a * grow[o];
                }
            }
        }
        if (xn->requires_grad) {
            const S* w = wn->value.data();
            S* gx = xn->acc();
            for (int64_t n = 0; n < N; ++n) {
                const S* grow = g + n * G;
                S* gxrow = gx + n * F;
                for (int64_t f = 0; f < F; ++f) {
                    const S* wrow = w + f * G;
                    S acc = S(0);
                    for (int64_t o = 0; o < G; ++o) acc += grow[o] * wrow[o];
                    gxrow[f] += acc;
                }
            }
        }
    };
    return TensorT<S>::make_op({N, G}, std::move(out), {input, weight, bias}, back);
}

// Batch normalization over (N, H, W) per channel. In training mode the batch
// statistics (biased variance) normalize the input and blend into the running
// buffers as r = momentum*r + (1-momentum)*batch; stat_count tracks how many
// batches have been folded in. Eval mode uses the running buffers and refuses
// to run before any statistics exist.
template <typename S>
TensorT<S> batch_norm(const TensorT<S>& input, const TensorT<S>& gamma, const TensorT<S>& beta,
                      TensorT<S>& running_mean, TensorT<S>& running_var, TensorT<S>& stat_count,
                      bool training, S momentum = S(0.9), S eps = S(1e-5)) {
    if (input.rank() != 4) throw ShapeError("batch_norm: input must be NCHW");
    const int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (gamma.rank() != 1 || gamma.dim(0) != C || beta.rank() != 1 || beta.dim(0) != C)
        throw ShapeError("batch_norm: gamma/beta must be [C]");
    if (running_mean.dim(0) != C || running_var.dim(0) != C)
        throw ShapeError("batch_norm: running buffers must be [C]");
    const int64_t M = N * H * W;
    if (training && M < 2)
        throw ShapeError("batch_norm: training needs at least 2 values per channel, got " + std::to_string(M));
    if (M == 0) throw ShapeError("batch_norm: empty batch");

    std::vector<S> mu(static_cast<std::size_t>(C)), var(static_cast<std::size_t>(C));
    const S* in = input.data();
    if (training) {
        for (int64_t c = 0; c < C; ++c) {
            S sum = S(0);
            for (int64_t n = 0; n < N; ++n) {
                const S* plane = in + (n * C + c) * H * W;
                for (int64_t i = 0; i < H * W; ++i) sum += plane[i];
            }
            const S m = sum / static_cast<S>(M);
            S sq = S(0);
            for (int64_t n = 0; n < N; ++n) {
                const S* plane = in + (n * C + c) * H * W;
                for (int64_t i = 0; i < H * W; ++i) {
                    const S d = plane[i] - m;
                    sq += d * d;
                }
            }
            mu[static_cast<std::size_t>(c)] = m;
            var[static_cast<std::size_t>(c)] = sq / static_cast<S>(M);
        }
        S* rm = running_mean.data();
        S* rv = running_var.data();
        for (int64_t c = 0; c < C; ++c) {
            rm[c] = momentum * rm[c] + (S(1) - momentum) * mu[static_cast<std::size_t>(c)];
            rv[c] = momentum * rv[c] + (S(1) - momentum) * var[static_cast<std::size_t>(c)];
        }
        stat_count.data()[0] += S(1);
    } else {
        if (stat_count.data()[0] <= S(0))
            throw ConfigError("batch_norm: eval mode before any statistics were recorded");
        const S* rm = running_mean.data();
        const S* rv = running_var.data();
        for (int64_t c = 0; c < C; ++c) {
            mu[static_cast<std::size_t>(c)] = rm[c];
            var[static_cast<std::size_t>(c)] = rv[c];
        }
    }

    std::vector<S> out(static_cast<std::size_t>(N * C * H * W));
    const S* gm = gamma.data();
    const S* bt = beta.data();
    for (int64_t c = 0; c < C; ++c) {
        const S inv = S(1) / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
        const S m = mu[static_cast<std::size_t>(c)];
        const S a = gm[c] * inv;
        const S b = bt[c] - a * m;
        for (int64_t n = 0; n < N; ++n) {
            const S* ip = in + (n * C + c) * H * W;
            S* op = out.data() + (n * C + c) * H * W;
            for (int64_t i = 0; i < H * W; ++i) op[i] = a * ip[i] + b;
        }
    }

    auto xn = input.node();
    auto gn = gamma.node();
    auto bnn = beta.node();
    auto back = [xn, gn, bnn, mu, var, N, C, H, W, M, eps, training](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        const S* in = xn->value.data();
        const S* gm = gn->value.data();
        for (int64_t c = 0; c < C; ++c) {
            const S m = mu[static_cast<std::size_t>(c)];
            const S inv = S(1) / std::sqrt(var[static_cast<std::size_t>(c)] + eps);
            // Channel-wise reductions shared by every grad below.
            S sum_g = S(0), sum_gx = S(0);
            for (int64_t n = 0; n < N; ++n) {
                const S* gp = g + (n * C + c) * H * W;
                const S* ip = in + (n * C + c) * H * W;
                for (int64_t i = 0; i < H * W; ++i) {
                    sum_g += gp[i];
                    sum_gx += gp[i] * (ip[i] - m) * inv;
                }
            }
            if (gn->requires_grad) gn->acc()[c] += sum_gx;
            if (bnn->requires_grad) bnn->acc()[c] += sum_g;
            if (xn->requires_grad) {
                S* gx = xn->acc();
                const S k = gm[c] * inv;
                if (training) {
                    // d/dx of the batch-statistics path: the mean and variance
                    // both depend on x, which yields the two correction terms.
                    const S mg = sum_g / static_cast<S>(M);
                    const S mgx = sum_gx / static_cast<S>(M);
                    for (int64_t n = 0; n < N; ++n) {
                        const S* gp = g + (n * C + c) * H * W;
                        const S* ip = in + (n * C + c) * H * W;
                        S* gxp = gx + (n * C + c) * H * W;
                        for (int64_t i = 0; i < H * W; ++i) {
                            const S xhat = (ip[i] - m) * inv;
                            gxp[i] += k * (gp[i] - mg - xhat * mgx);
                        }
                    }
                } else {
                    for (int64_t n = 0; n < N; ++n) {
                        const S* gp = g + (n * C + c) * H * W;
                        S* gxp = gx + (n * C + c) * H * W;
                        for (int64_t i = 0; i < H * W; ++i) gxp[i] += k * gp[i];
                    }
                }
            }
        }
    };
    return TensorT<S>::make_op({N, C, H, W}, std::move(out), {input, gamma, beta}, back);
}

// Rearranges [N, C*r*r, H, W] into [N, C, H*r, W*r]; channel c*r*r + i*r + j
// lands at spatial offset (i, j) inside each r-by-r output cell.
template <typename S>
TensorT<S> pixel_shuffle_upsample(const TensorT<S>& input, int r) {
    if (input.rank() != 4) throw ShapeError("pixel_shuffle_upsample: input must be NCHW");
    if (r < 1) throw ConfigError("pixel_shuffle_upsample: factor must be >= 1");
    const int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const int64_t r2 = static_cast<int64_t>(r) * r;
    if (C % r2 != 0)
        throw ShapeError("pixel_shuffle_upsample: " + std::to_string(C) +
                         " channels not divisible by r^2 = " + std::to_string(r2));
    const int64_t Co = C / r2, OH = H * r, OW = W * r;

    std::vector<S> out(static_cast<std::size_t>(N * Co * OH * OW));
    const S* in = input.data();
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t co = 0; co < Co; ++co) {
            for (int64_t i = 0; i < r; ++i) {
                for (int64_t j = 0; j < r; ++j) {
                    const S* ip = in + ((n * C + (co * r2 + i * r + j)) * H) * W;
                    S* op = out.data() + (n * Co + co) * OH * OW;
                    for (int64_t y = 0; y < H; ++y) {
                        const S* irow = ip + y * W;
                        S* orow = op + (y * r + i) * OW + j;
                        for (int64_t x = 0; x < W; ++x) orow[x * r] = irow[x];
                    }
                }
            }
        }
    }

    auto xn = input.node();
    auto back = [xn, N, C, Co, H, W, OH, OW, r, r2](TensorNodeT<S>& self) {
        if (!xn->requires_grad) return;
        const S* g = self.grad.data();
        S* gx = xn->acc();
        for (int64_t n = 0; n < N; ++n) {
            for (int64_t co = 0; co < Co; ++co) {
                for (int64_t i = 0; i < r; ++i) {
                    for (int64_t j = 0; j < r; ++j) {
                        S* gxp = gx + ((n * C + (co * r2 + i * r + j)) * H) * W;
                        const S* gp = g + (n * Co + co) * OH * OW;
                        for (int64_t y = 0; y < H; ++y) {
                            S* gxrow = gxp + y * W;
                            const S* grow = gp + (y * r + i) * OW + j;
                            for (int64_t x = 0; x < W; ++x) gxrow[x] += grow[x * r];
                        }
                    }
                }
            }
        }
    };
    return TensorT<S>::make_op({N, Co, OH, OW}, std::move(out), {input}, back);
}

// Reduces [N, F] to per-sample sums [N, 1].
template <typename S>
TensorT<S> row_sum(const TensorT<S>& a) {
    if (a.rank() != 2) throw ShapeError("row_sum: expected [N, F], got " + shape_str(a.shape()));
    const int64_t N = a.dim(0), F = a.dim(1);
    std::vector<S> out(static_cast<std::size_t>(N));
    const S* p = a.data();
    for (int64_t n = 0; n < N; ++n) {
        S acc = S(0);
        for (int64_t f = 0; f < F; ++f) acc += p[n * F + f];
        out[static_cast<std::size_t>(n)] = acc;
    }
    auto an = a.node();
    return TensorT<S>::make_op({N, 1}, std::move(out), {a}, [an, N, F](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        S* ga = an->acc();
        for (int64_t n = 0; n < N; ++n) {
            const S gv = g[n];
            for (int64_t f = 0; f < F; ++f) ga[n * F + f] += gv;
        }
    });
}

template <typename S>
TensorT<S> relu(const TensorT<S>& a) {
    std::vector<S> out(a.values());
    for (auto& v : out) v = v > S(0) ? v : S(0);
    auto an = a.node();
    return TensorT<S>::make_op(a.shape(), std::move(out), {a}, [an](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        const S* x = an->value.data();
        S* gx = an->acc();
        for (std::size_t i = 0; i < self.value.size(); ++i) {
            if (x[i] > S(0)) gx[i] += g[i];
        }
    });
}

template <typename S>
TensorT<S> leaky_relu(const TensorT<S>& a, S slope = S(0.2)) {
    std::vector<S> out(a.values());
    for (auto& v : out) v = v > S(0) ? v : slope * v;
    auto an = a.node();
    return TensorT<S>::make_op(a.shape(), std::move(out), {a}, [an, slope](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        const S* x = an->value.data();
        S* gx = an->acc();
        for (std::size_t i = 0; i < self.value.size(); ++i) gx[i] += x[i] > S(0) ? g[i] : slope * g[i];
    });
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& a) {
    std::vector<S> out(a.values());
    for (auto& v : out) {
        // Split by sign so exp never overflows.
        if (v >= S(0)) {
            v = S(1) / (S(1) + std::exp(-v));
        } else {
            const S e = std::exp(v);
            v = e / (S(1) + e);
        }
    }
    auto an = a.node();
    return TensorT<S>::make_op(a.shape(), std::move(out), {a}, [an](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        const S* y = self.value.data();
        S* gx = an->acc();
        for (std::size_t i = 0; i < self.value.size(); ++i) gx[i] += g[i] * y[i] * (S(1) - y[i]);
    });
}

template <typename S>
TensorT<S> clamp01(const TensorT<S>& a) {
    std::vector<S> out(a.values());
    for (auto& v : out) v = std::min(S(1), std::max(S(0), v));
    auto an = a.node();
    return TensorT<S>::make_op(a.shape(), std::move(out), {a}, [an](TensorNodeT<S>& self) {
        const S* g = self.grad.data();
        const S* x = an->value.data();
        S* gx = an->acc();
        for (std::size_t i = 0; i < self.value.size(); ++i) {
            if (x[i] > S(0) && x[i] < S(1)) gx[i] += g[i];
        }
    });
}

enum class ActKind { identity, relu, leaky_relu, sigmoid };

template <typename S>
TensorT<S> activation(const TensorT<S>& a, ActKind kind, S slope = S(0.2)) {
    switch (kind) {
        case ActKind::identity: return a;
        case ActKind::relu: return relu(a);
        case ActKind::leaky_relu: return leaky_relu(a, slope);
        case ActKind::sigmoid: return sigmoid(a);
    }
    throw ConfigError("activation: unknown kind");
}

}  // namespace psrg
