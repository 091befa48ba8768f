#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "models.hpp"
#include "ops.hpp"
#include "optim.hpp"
#include "resample.hpp"

namespace psrg {

enum class TripletMode { literal, hinged };

struct LossWeights {
    float alpha = 0.01f;                   // adversarial term weight
    float feature_scale = 1.0f / 12.75f;   // feature-map rescale before the MSE
    float triplet_weight = 0.1f;
    float triplet_margin = 1.0f;
    TripletMode triplet_mode = TripletMode::hinged;
    // The rescale can act on the feature maps (loss picks up the square) or
    // directly on the loss value; the former is the default.
    bool rescale_loss_directly = false;
    // Compare raw pixels in the triplet term instead of extractor features.
    bool triplet_raw_pixels = false;

    void validate() const {
        if (!(alpha > 0.0f)) throw ConfigError("loss weights: alpha must be > 0");
        if (!(feature_scale > 0.0f)) throw ConfigError("loss weights: feature_scale must be > 0");
        if (triplet_weight < 0.0f) throw ConfigError("loss weights: triplet_weight must be >= 0");
        if (triplet_margin < 0.0f) throw ConfigError("loss weights: triplet_margin must be >= 0");
    }
};

struct FeatureLayer {
    int out_channels;
    int stride;
    int kernel;
    bool relu;
};

// Frozen convolutional embedding standing in for a pretrained perceptual
// network: deterministic seeded-random weights by default, or weights loaded
// from a file in the checkpoint format. Its parameters are never trainable.
template <typename S>
struct FeatureExtractorT {
    int input_channels = 3;
    std::vector<FeatureLayer> layers;
    ParamSetT<S> params;
    std::string source = "seeded_random";
};

using FeatureExtractor = FeatureExtractorT<float>;

// Five 3x3 conv layers, width doubling each layer from base_channels, with a
// stride-2 reduction on every other layer and ReLU throughout.
template <typename S = float>
FeatureExtractorT<S> make_feature_extractor(int input_channels, uint64_t seed, int base_channels = 32) {
    if (base_channels < 1) throw ConfigError("feature extractor: base_channels must be >= 1");
    FeatureExtractorT<S> ex;
    ex.input_channels = input_channels;
    int c = base_channels;
    for (int i = 0; i < 5; ++i) {
        ex.layers.push_back({c, i % 2 == 1 ? 2 : 1, 3, true});
        c *= 2;
    }
    Rng rng(seed);
    int64_t cin = input_channels;
    for (std::size_t i = 0; i < ex.layers.size(); ++i) {
        const auto& l = ex.layers[i];
        detail::add_conv(ex.params, "conv" + std::to_string(i), l.out_channels, cin, l.kernel, rng);
        cin = l.out_channels;
    }
    ex.params.set_trainable(false);
    return ex;
}

// Pass-through embedding (1x1 identity conv, no activation); with it the
// feature loss reduces to a scaled MSE, which the tests exploit.
template <typename S = float>
FeatureExtractorT<S> make_identity_extractor(int input_channels) {
    FeatureExtractorT<S> ex;
    ex.input_channels = input_channels;
    ex.layers.push_back({input_channels, 1, 1, false});
    TensorT<S> w({input_channels, input_channels, 1, 1});
    for (int c = 0; c < input_channels; ++c) w.at({c, c, 0, 0}) = S(1);
    ex.params.add_param("conv0.w", std::move(w));
    ex.params.add_param("conv0.b", TensorT<S>::zeros({input_channels}));
    ex.params.set_trainable(false);
    ex.source = "identity";
    return ex;
}

template <typename S>
TensorT<S> feature_forward(FeatureExtractorT<S>& ex, const TensorT<S>& x) {
    if (x.rank() != 4) throw ShapeError("feature extractor: input must be NCHW");
    if (x.dim(1) != ex.input_channels)
        throw ShapeError("feature extractor: expected " + std::to_string(ex.input_channels) +
                         " channels, got " + std::to_string(x.dim(1)));
    auto y = x;
    for (std::size_t i = 0; i < ex.layers.size(); ++i) {
        const auto& l = ex.layers[i];
        const std::string p = "conv" + std::to_string(i);
        y = conv2d(y, ex.params.param(p + ".w"), ex.params.param(p + ".b"), l.stride, l.kernel / 2);
        if (l.relu) y = relu(y);
    }
    return y;
}

// Plain pixel-space MSE, averaged over every element.
template <typename S>
TensorT<S> mse_loss(const TensorT<S>& sr, const TensorT<S>& hr) {
    assert_same_shape(sr, hr, "mse_loss");
    return mean(square(hr - sr));
}

namespace detail {

// Squared feature difference normalized per sample and spatial position
// (channels are summed, not averaged), with the rescale applied to the maps
// so it enters the loss squared, or once if applied to the loss directly.
template <typename S>
TensorT<S> feature_mse_from_maps(const TensorT<S>& fa, const TensorT<S>& fb, const LossWeights& w) {
    assert_same_shape(fa, fb, "feature_loss maps");
    const int64_t n = fa.dim(0), hf = fa.dim(2), wf = fa.dim(3);
    const S fs = static_cast<S>(w.feature_scale);
    const S scale = w.rescale_loss_directly ? fs : fs * fs;
    return sum(square(fa - fb)) * (scale / static_cast<S>(n * hf * wf));
}

template <typename S>
void assert_probability_range(const TensorT<S>& d, const char* what) {
    const S* p = d.data();
    for (int64_t i = 0, n = d.numel(); i < n; ++i) {
        if (!(p[i] >= S(0) && p[i] <= S(1)))
            throw NumericError(std::string(what) + ": discriminator output outside [0,1]");
    }
}

}  // namespace detail

template <typename S>
TensorT<S> feature_loss(const TensorT<S>& sr, const TensorT<S>& hr, FeatureExtractorT<S>& ex,
                        const LossWeights& w) {
    assert_same_shape(sr, hr, "feature_loss");
    auto fa = feature_forward(ex, sr);
    auto fb = feature_forward(ex, hr);
    return detail::feature_mse_from_maps(fa, fb, w);
}

// Non-saturating generator objective: the summed negative log of the
// discriminator's belief that each generated sample is real.
template <typename S>
TensorT<S> adversarial_gen_loss(const TensorT<S>& d_out) {
    detail::assert_probability_range(d_out, "adversarial_gen_loss");
    return sum(log_clamped(d_out)) * S(-1);
}

template <typename S>
TensorT<S> discriminator_loss(const TensorT<S>& d_real, const TensorT<S>& d_fake) {
    detail::assert_probability_range(d_real, "discriminator_loss");
    detail::assert_probability_range(d_fake, "discriminator_loss");
    auto real_term = sum(log_clamped(d_real));
    auto fake_term = sum(log_clamped(rsub_scalar(S(1), d_fake)));
    return (real_term + fake_term) * S(-1);
}

// Triplet objective over already-embedded tensors: per-sample squared
// distances anchor-positive minus anchor-negative, summed over the batch.
// Literal mode keeps the raw (unbounded) difference; hinged mode applies
// max(. + margin, 0) per sample.
template <typename S>
TensorT<S> triplet_loss(const TensorT<S>& anchor, const TensorT<S>& positive,
                        const TensorT<S>& negative, const LossWeights& w) {
    assert_same_shape(anchor, positive, "triplet_loss");
    assert_same_shape(anchor, negative, "triplet_loss");
    auto fa = flatten_batch(anchor);
    auto dp = row_sum(square(fa - flatten_batch(positive)));
    auto dn = row_sum(square(fa - flatten_batch(negative)));
    auto diff = dp - dn;
    if (w.triplet_mode == TripletMode::hinged)
        return sum(relu(add_scalar(diff, static_cast<S>(w.triplet_margin))));
    return sum(diff);
}

// Total objective of one stage plus its component values for logging. The
// total is assembled from the exact same scalar nodes the components are read
// from, so the breakdown always sums to the total.
template <typename S>
struct StageLossT {
    TensorT<S> total;
    S mse = S(0);
    S feature = S(0);
    S adversarial = S(0);  // raw, before the alpha weight
    S triplet = S(0);      // raw, before the triplet weight
};

using StageLoss = StageLossT<float>;

template <typename S>
StageLossT<S> stage_loss(int stage_index, const TensorT<S>& sr, const TensorT<S>& sr_prev,
                         const TensorT<S>& hr, const TensorT<S>& d_out, FeatureExtractorT<S>& ex,
                         const LossWeights& w) {
    w.validate();
    if (stage_index < 1) throw ConfigError("stage_loss: stage index must be >= 1");
    if (stage_index >= 2 && !sr_prev.defined())
        throw ContractError("stage_loss: stage " + std::to_string(stage_index) +
                            " needs the previous stage's output as the triplet negative");
    if (stage_index == 1 && sr_prev.defined())
        throw ContractError("stage_loss: stage 1 has no previous stage");
    assert_same_shape(sr, hr, "stage_loss");

    StageLossT<S> out;
    auto mse_t = mse_loss(sr, hr);
    auto fa = feature_forward(ex, sr);
    auto fh = feature_forward(ex, hr);
    auto feat_t = detail::feature_mse_from_maps(fa, fh, w);
    auto adv_t = adversarial_gen_loss(d_out);
    out.mse = mse_t.item();
    out.feature = feat_t.item();
    out.adversarial = adv_t.item();
    out.total = mse_t + feat_t + static_cast<S>(w.alpha) * adv_t;

    if (stage_index >= 2) {
        if (sr_prev.dim(2) * 2 != sr.dim(2) || sr_prev.dim(3) * 2 != sr.dim(3))
            throw ShapeError("stage_loss: previous stage output must be half the current resolution");
        // The negative is the frozen previous stage's result, brought up to
        // the anchor's size; no gradient flows through it.
        auto neg = bicubic_resample(sr_prev.detach(), 2.0);
        TensorT<S> trip_t;
        if (w.triplet_raw_pixels) {
            trip_t = triplet_loss(sr, hr, neg, w);
        } else {
            auto fn = feature_forward(ex, neg);
            trip_t = triplet_loss(fa, fh, fn, w);
        }
        out.triplet = trip_t.item();
        out.total = out.total + static_cast<S>(w.triplet_weight) * trip_t;
    }
    return out;
}

}  // namespace psrg
