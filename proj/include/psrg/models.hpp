#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ops.hpp"
#include "optim.hpp"

namespace psrg {

struct GeneratorConfig {
    int input_channels = 3;
    int base_channels = 64;
    int num_residual_blocks = 4;
    int upsample_blocks = 1;
    // 9 gives the first layer a wide receptive field; everything after it is 3x3.
    int head_kernel = 9;
    // Tail maps to [0,1] through a sigmoid by default; the alternative is a
    // linear tail hard-clamped to the range.
    bool sigmoid_output = true;

    void validate() const {
        if (input_channels != 1 && input_channels != 3)
            throw ConfigError("generator: input_channels must be 1 or 3");
        if (base_channels < 8) throw ConfigError("generator: base_channels must be >= 8");
        if (num_residual_blocks < 1) throw ConfigError("generator: num_residual_blocks must be >= 1");
        if (upsample_blocks != 1)
            throw ConfigError("generator: exactly one upsample block per stage");
        if (head_kernel < 1 || head_kernel % 2 == 0)
            throw ConfigError("generator: head_kernel must be odd and positive");
    }
};

struct DiscriminatorConfig {
    std::vector<std::pair<int, int>> channel_ladder;  // (channels, stride)
    int dense_width = 1024;
    int input_size = 32;
    int input_channels = 3;

    static std::vector<std::pair<int, int>> default_ladder() {
        return {{64, 1}, {64, 2}, {128, 1}, {128, 2}, {256, 1}, {256, 2}, {512, 1}, {512, 2}};
    }

    // Channels may only stay flat or double, and a doubling must ride on the
    // spatial reduction: it is legal only right after a stride-2 rung.
    void validate() const {
        if (input_channels != 1 && input_channels != 3)
            throw ConfigError("discriminator: input_channels must be 1 or 3");
        if (channel_ladder.empty()) throw ConfigError("discriminator: empty channel ladder");
        if (dense_width < 1) throw ConfigError("discriminator: dense_width must be >= 1");
        if (input_size < 1) throw ConfigError("discriminator: input_size must be >= 1");
        for (std::size_t i = 0; i < channel_ladder.size(); ++i) {
            const auto [c, s] = channel_ladder[i];
            if (c < 1) throw ConfigError("discriminator: ladder channels must be positive");
            if (s != 1 && s != 2) throw ConfigError("discriminator: ladder strides must be 1 or 2");
            if (i > 0) {
                const auto [pc, ps] = channel_ladder[i - 1];
                if (c < pc) throw ConfigError("discriminator: ladder channels must not decrease");
                if (c != pc && c != 2 * pc)
                    throw ConfigError("discriminator: ladder channels may only double, got " +
                                      std::to_string(pc) + " -> " + std::to_string(c));
                if (c == 2 * pc && ps != 2)
                    throw ConfigError("discriminator: channel doubling must follow a stride-2 rung");
            }
        }
        int h = input_size;
        for (const auto& [c, s] : channel_ladder) h = conv_out(h, s);
        if (h < 1) throw ConfigError("discriminator: input_size " + std::to_string(input_size) +
                                     " collapses below 1 px in the ladder");
    }

    static int conv_out(int size, int stride) { return (size + 2 - 3) / stride + 1; }

    int flat_features() const {
        int h = input_size;
        for (const auto& [c, s] : channel_ladder) h = conv_out(h, s);
        return channel_ladder.back().first * h * h;
    }
};

namespace detail {

template <typename S>
void add_bn(ParamSetT<S>& ps, const std::string& prefix, int64_t c) {
    ps.add_param(prefix + ".gamma", TensorT<S>::full({c}, S(1)));
    ps.add_param(prefix + ".beta", TensorT<S>::zeros({c}));
    ps.add_buffer(prefix + ".mean", TensorT<S>::zeros({c}));
    ps.add_buffer(prefix + ".var", TensorT<S>::full({c}, S(1)));
    ps.add_buffer(prefix + ".count", TensorT<S>::zeros({1}));
}

template <typename S>
void add_conv(ParamSetT<S>& ps, const std::string& prefix, int64_t cout, int64_t cin, int64_t k, Rng& rng) {
    ps.add_param(prefix + ".w", he_conv_weight<S>(cout, cin, k, k, rng));
    ps.add_param(prefix + ".b", TensorT<S>::zeros({cout}));
}

}  // namespace detail

template <typename S>
TensorT<S> bn_layer(ParamSetT<S>& ps, const std::string& prefix, const TensorT<S>& x, bool training) {
    return batch_norm(x, ps.param(prefix + ".gamma"), ps.param(prefix + ".beta"),
                      ps.buffer(prefix + ".mean"), ps.buffer(prefix + ".var"),
                      ps.buffer(prefix + ".count"), training);
}

// conv-BN-ReLU-conv-BN with an identity skip. Zeroing both conv weights and
// biases turns the branch into BN of a constant, which is exactly zero, so
// the block collapses to the identity map.
template <typename S>
TensorT<S> residual_block(ParamSetT<S>& ps, const std::string& prefix, const TensorT<S>& x,
                          bool training) {
    auto y = conv2d(x, ps.param(prefix + ".conv1.w"), ps.param(prefix + ".conv1.b"), 1, 1);
    y = relu(bn_layer(ps, prefix + ".bn1", y, training));
    y = conv2d(y, ps.param(prefix + ".conv2.w"), ps.param(prefix + ".conv2.b"), 1, 1);
    y = bn_layer(ps, prefix + ".bn2", y, training);
    return y + x;
}

template <typename S>
struct GeneratorT {
    GeneratorConfig config;
    ParamSetT<S> params;
};

using Generator = GeneratorT<float>;

template <typename S = float>
GeneratorT<S> build_generator(const GeneratorConfig& cfg, uint64_t seed) {
    cfg.validate();
    GeneratorT<S> g;
    g.config = cfg;
    Rng rng(seed);
    const int64_t c = cfg.base_channels;
    const int64_t in = cfg.input_channels;
    detail::add_conv(g.params, "head", c, in, cfg.head_kernel, rng);
    for (int i = 0; i < cfg.num_residual_blocks; ++i) {
        const std::string p = "res" + std::to_string(i);
        detail::add_conv(g.params, p + ".conv1", c, c, 3, rng);
        detail::add_bn(g.params, p + ".bn1", c);
        detail::add_conv(g.params, p + ".conv2", c, c, 3, rng);
        detail::add_bn(g.params, p + ".bn2", c);
    }
    detail::add_conv(g.params, "post", c, c, 3, rng);
    detail::add_bn(g.params, "post_bn", c);
    detail::add_conv(g.params, "up", 4 * c, c, 3, rng);
    detail::add_conv(g.params, "tail", in, c, 3, rng);
    return g;
}

// One 2x stage: head conv, residual trunk with a long skip, sub-pixel
// upsample, tail back to image channels mapped into [0,1].
template <typename S>
TensorT<S> generator_forward(GeneratorT<S>& g, const TensorT<S>& lr, bool training) {
    const auto& cfg = g.config;
    if (lr.rank() != 4) throw ShapeError("generator: input must be NCHW");
    if (lr.dim(1) != cfg.input_channels)
        throw ShapeError("generator: expected " + std::to_string(cfg.input_channels) +
                         " channels, got " + std::to_string(lr.dim(1)));
    if (lr.dim(2) < 8 || lr.dim(3) < 8)
        throw ShapeError("generator: input must be at least 8x8, got " + shape_str(lr.shape()));
    auto& ps = g.params;
    auto head = relu(conv2d(lr, ps.param("head.w"), ps.param("head.b"), 1, cfg.head_kernel / 2));
    auto x = head;
    for (int i = 0; i < cfg.num_residual_blocks; ++i)
        x = residual_block(ps, "res" + std::to_string(i), x, training);
    x = conv2d(x, ps.param("post.w"), ps.param("post.b"), 1, 1);
    x = bn_layer(ps, "post_bn", x, training) + head;
    x = conv2d(x, ps.param("up.w"), ps.param("up.b"), 1, 1);
    x = relu(pixel_shuffle_upsample(x, 2));
    x = conv2d(x, ps.param("tail.w"), ps.param("tail.b"), 1, 1);
    return cfg.sigmoid_output ? sigmoid(x) : clamp01(x);
}

template <typename S>
struct DiscriminatorT {
    DiscriminatorConfig config;
    ParamSetT<S> params;
};

using Discriminator = DiscriminatorT<float>;

template <typename S = float>
DiscriminatorT<S> build_discriminator(const DiscriminatorConfig& cfg, uint64_t seed) {
    cfg.validate();
    DiscriminatorT<S> d;
    d.config = cfg;
    Rng rng(seed);
    int64_t cin = cfg.input_channels;
    for (std::size_t i = 0; i < cfg.channel_ladder.size(); ++i) {
        const auto [c, s] = cfg.channel_ladder[i];
        const std::string p = "conv" + std::to_string(i);
        detail::add_conv(d.params, p, c, cin, 3, rng);
        if (i > 0) detail::add_bn(d.params, "bn" + std::to_string(i), c);
        cin = c;
    }
    d.params.add_param("fc1.w", he_dense_weight<S>(cfg.flat_features(), cfg.dense_width, rng));
    d.params.add_param("fc1.b", TensorT<S>::zeros({cfg.dense_width}));
    d.params.add_param("fc2.w", he_dense_weight<S>(cfg.dense_width, 1, rng));
    d.params.add_param("fc2.b", TensorT<S>::zeros({1}));
    return d;
}

// Strided conv ladder with LeakyReLU, then the two dense layers and a sigmoid
// that turns the logit into a real-vs-generated probability per sample.
template <typename S>
TensorT<S> discriminator_forward(DiscriminatorT<S>& d, const TensorT<S>& image, bool training) {
    const auto& cfg = d.config;
    if (image.rank() != 4) throw ShapeError("discriminator: input must be NCHW");
    if (image.dim(1) != cfg.input_channels)
        throw ShapeError("discriminator: expected " + std::to_string(cfg.input_channels) +
                         " channels, got " + std::to_string(image.dim(1)));
    if (image.dim(2) != cfg.input_size || image.dim(3) != cfg.input_size)
        throw ShapeError("discriminator: expects " + std::to_string(cfg.input_size) + "x" +
                         std::to_string(cfg.input_size) + " input, got " + shape_str(image.shape()));
    auto& ps = d.params;
    auto x = image;
    for (std::size_t i = 0; i < cfg.channel_ladder.size(); ++i) {
        const auto [c, s] = cfg.channel_ladder[i];
        const std::string p = "conv" + std::to_string(i);
        x = conv2d(x, ps.param(p + ".w"), ps.param(p + ".b"), s, 1);
        if (i > 0) x = bn_layer(ps, "bn" + std::to_string(i), x, training);
        x = leaky_relu(x, S(0.2));
    }
    x = flatten_batch(x);
    x = leaky_relu(dense(x, ps.param("fc1.w"), ps.param("fc1.b")), S(0.2));
    x = dense(x, ps.param("fc2.w"), ps.param("fc2.b"));
    return sigmoid(x);
}

// Runs one training-mode forward without touching the tape, so batch-norm
// layers acquire running statistics before the first eval-mode call.
template <typename S>
void warm_generator_stats(GeneratorT<S>& g, const TensorT<S>& sample) {
    NoGradGuard ng;
    generator_forward(g, sample, true);
}

template <typename S>
void warm_discriminator_stats(DiscriminatorT<S>& d, const TensorT<S>& sample) {
    NoGradGuard ng;
    discriminator_forward(d, sample, true);
}

}  // namespace psrg
