#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "image.hpp"
#include "resample.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace psrg {

struct ImagePair {
    Tensor hr;  // [C,H,W] in [0,1]
    Tensor lr;  // [C,H/r,W/r]
    int scale = 2;
    std::string id;
};

enum class NoiseKind { none, gaussian, salt_pepper, speckle };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::none;
    double param = 0.0;  // gaussian sigma, salt/pepper density, speckle variance
    uint64_t seed = 0;

    // Accepts "none", "gaussian:0.005", "salt_pepper:0.03", "speckle:0.05".
    static NoiseSpec parse(const std::string& text, uint64_t seed = 0) {
        NoiseSpec spec;
        spec.seed = seed;
        if (text == "none" || text.empty()) return spec;
        const auto colon = text.find(':');
        const std::string kind = text.substr(0, colon);
        if (kind == "gaussian") spec.kind = NoiseKind::gaussian;
        else if (kind == "salt_pepper") spec.kind = NoiseKind::salt_pepper;
        else if (kind == "speckle") spec.kind = NoiseKind::speckle;
        else throw ConfigError("unknown noise kind: " + kind);
        if (colon == std::string::npos) throw ConfigError("noise spec needs kind:param, got " + text);
        try {
            spec.param = std::stod(text.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("bad noise parameter in " + text);
        }
        if (spec.param < 0.0) throw ConfigError("noise parameter must be >= 0");
        return spec;
    }

    std::string label() const {
        switch (kind) {
            case NoiseKind::none: return "none";
            case NoiseKind::gaussian: return "gaussian:" + format_param();
            case NoiseKind::salt_pepper: return "salt_pepper:" + format_param();
            case NoiseKind::speckle: return "speckle:" + format_param();
        }
        return "none";
    }

    // The corruption study covered these parameter ranges; values outside
    // them are allowed but flagged, since conclusions drawn there may not
    // transfer.
    bool in_tested_range() const {
        switch (kind) {
            case NoiseKind::none: return true;
            case NoiseKind::gaussian: return param >= 0.001 && param <= 0.01;
            case NoiseKind::salt_pepper: return param >= 0.01 && param <= 0.05;
            case NoiseKind::speckle: return param >= 0.01 && param <= 0.05;
        }
        return true;
    }

private:
    std::string format_param() const {
        std::string s = std::to_string(param);
        while (s.size() > 1 && s.back() == '0') s.pop_back();
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
    }
};

enum class DegradeMode { blur_bicubic, bicubic_only };

// HR -> LR synthesis: Gaussian anti-alias blur (default sigma r/2, enough to
// suppress content above the post-decimation band limit) followed by bicubic
// decimation. bicubic_only skips the blur.
inline Tensor degrade(const Tensor& hr, int r, DegradeMode mode = DegradeMode::blur_bicubic,
                      double blur_sigma = -1.0) {
    if (r < 2 || (r & (r - 1)) != 0) throw ConfigError("degrade: scale must be a power of 2, >= 2");
    const int64_t H = hr.dim(hr.rank() - 2), W = hr.dim(hr.rank() - 1);
    if (H % r != 0 || W % r != 0)
        throw ShapeError("degrade: dims " + shape_str(hr.shape()) + " not divisible by " + std::to_string(r));
    Tensor x = hr;
    if (mode == DegradeMode::blur_bicubic) {
        const double sigma = blur_sigma > 0.0 ? blur_sigma : static_cast<double>(r) / 2.0;
        x = gaussian_blur(x, sigma);
    }
    return bicubic_resample(x, 1.0 / static_cast<double>(r));
}

// Additive Gaussian, exact-count salt and pepper, or multiplicative speckle
// noise, all clamped back into [0,1] and reproducible from spec.seed.
inline Tensor add_noise(const Tensor& img, const NoiseSpec& spec) {
    if (spec.param > 0.0 && !spec.in_tested_range())
        std::cerr << "warning: noise parameter " << spec.param << " outside the studied range for "
                  << spec.label() << "\n";
    Tensor out = img.detach();
    if (spec.kind == NoiseKind::none || spec.param == 0.0) return out;
    Rng rng(spec.seed);
    float* p = out.data();
    const int64_t n = out.numel();
    switch (spec.kind) {
        case NoiseKind::gaussian: {
            const double sigma = spec.param;
            for (int64_t i = 0; i < n; ++i)
                p[i] = static_cast<float>(std::min(1.0, std::max(0.0, double(p[i]) + rng.normal(0.0, sigma))));
            break;
        }
        case NoiseKind::salt_pepper: {
            // Exactly round(density * pixels) distinct pixels flip to 0 or 1;
            // a hit affects every channel of that pixel.
            const int64_t H = out.dim(out.rank() - 2), W = out.dim(out.rank() - 1);
            const int64_t C = out.numel() / (H * W);
            const int64_t k = std::llround(spec.param * static_cast<double>(H * W));
            const auto picks = rng.sample_without_replacement(static_cast<uint64_t>(H * W),
                                                              static_cast<uint64_t>(std::min<int64_t>(k, H * W)));
            for (const auto pix : picks) {
                const float v = rng.uniform() < 0.5 ? 0.0f : 1.0f;
                for (int64_t c = 0; c < C; ++c) p[c * H * W + static_cast<int64_t>(pix)] = v;
            }
            break;
        }
        case NoiseKind::speckle: {
            const double sd = std::sqrt(spec.param);
            for (int64_t i = 0; i < n; ++i) {
                const double v = double(p[i]) * (1.0 + rng.normal(0.0, sd));
                p[i] = static_cast<float>(std::min(1.0, std::max(0.0, v)));
            }
            break;
        }
        case NoiseKind::none: break;
    }
    return out;
}

// The eight square symmetries, used for optional patch augmentation.
inline Tensor dihedral_transform(const Tensor& img, int k) {
    const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    if ((k & 4) && H != W) throw ShapeError("dihedral_transform: transpose needs square input");
    Tensor out({C, H, W});
    const float* src = img.data();
    float* dst = out.data();
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t y = 0; y < H; ++y) {
            for (int64_t x = 0; x < W; ++x) {
                int64_t sy = (k & 2) ? H - 1 - y : y;
                int64_t sx = (k & 1) ? W - 1 - x : x;
                if (k & 4) std::swap(sy, sx);
                dst[(c * H + y) * W + x] = src[(c * H + sy) * W + sx];
            }
        }
    }
    return out;
}

// Stacks same-shape [C,H,W] images into one [N,C,H,W] batch.
inline Tensor stack_batch(const std::vector<Tensor>& images) {
    if (images.empty()) throw ShapeError("stack_batch: empty batch");
    const Shape s = images.front().shape();
    Tensor out({static_cast<int64_t>(images.size()), s[0], s[1], s[2]});
    float* dst = out.data();
    const int64_t stride = images.front().numel();
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].shape() != s) throw ShapeError("stack_batch: mixed shapes");
        std::copy(images[i].data(), images[i].data() + stride, dst + static_cast<int64_t>(i) * stride);
    }
    return out;
}

// Procedural toy corpus: each image is a low background plus a few Gaussian
// blobs (smooth structure) and a few axis-aligned bars (sharp edges), clamped
// to [0,1]. Image i is fully determined by (seed, i).
inline std::vector<Tensor> synthetic_corpus(int count, int size, int channels, uint64_t seed) {
    if (count < 1 || size < 8) throw ConfigError("synthetic_corpus: need count >= 1 and size >= 8");
    if (channels != 1 && channels != 3) throw ConfigError("synthetic_corpus: channels must be 1 or 3");
    std::vector<Tensor> images;
    images.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng = Rng::derive(seed, static_cast<uint64_t>(i));
        Tensor img({channels, size, size});
        float* p = img.data();
        for (int64_t c = 0; c < channels; ++c) {
            const double bg = rng.uniform(0.1, 0.4);
            std::fill(p + c * size * size, p + (c + 1) * size * size, static_cast<float>(bg));
        }
        const int blobs = 2 + static_cast<int>(rng.uniform_int(4));
        for (int b = 0; b < blobs; ++b) {
            const double cy = rng.uniform(0.0, size);
            const double cx = rng.uniform(0.0, size);
            const double s2 = std::pow(rng.uniform(size / 16.0, size / 6.0), 2.0);
            const double amp = rng.uniform(0.3, 0.6) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            for (int64_t c = 0; c < channels; ++c) {
                float* plane = p + c * size * size;
                for (int64_t y = 0; y < size; ++y) {
                    for (int64_t x = 0; x < size; ++x) {
                        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                        plane[y * size + x] += static_cast<float>(amp * std::exp(-0.5 * d2 / s2));
                    }
                }
            }
        }
        const int bars = 1 + static_cast<int>(rng.uniform_int(3));
        for (int b = 0; b < bars; ++b) {
            const bool horizontal = rng.uniform() < 0.5;
            const int width = 2 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(size / 8)));
            const int start = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(size - width)));
            const double amp = rng.uniform(0.2, 0.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            for (int64_t c = 0; c < channels; ++c) {
                float* plane = p + c * size * size;
                for (int64_t y = 0; y < size; ++y) {
                    for (int64_t x = 0; x < size; ++x) {
                        const int64_t along = horizontal ? y : x;
                        if (along >= start && along < start + width)
                            plane[y * size + x] += static_cast<float>(amp);
                    }
                }
            }
        }
        for (int64_t j = 0; j < img.numel(); ++j) p[j] = std::min(1.0f, std::max(0.0f, p[j]));
        images.push_back(std::move(img));
    }
    return images;
}

// Deterministic infinite stream of aligned HR/LR patch pairs. Every epoch
// visits each patch slot exactly once in an order derived from (seed, epoch),
// and the (epoch, position) cursor is enough to resume the stream exactly.
class PatchDataset {
public:
    struct Cursor {
        uint64_t epoch = 0;
        uint64_t pos = 0;
    };

    PatchDataset(std::vector<Tensor> images, std::vector<std::string> ids, int r, int patch_size,
                 uint64_t seed, DegradeMode mode = DegradeMode::blur_bicubic, double blur_sigma = -1.0,
                 bool augment = false)
        : images_(std::move(images)), ids_(std::move(ids)), scale_(r), patch_(patch_size), seed_(seed),
          mode_(mode), blur_sigma_(blur_sigma), augment_(augment) {
        if (images_.empty()) throw DataError("dataset: no images");
        if (images_.size() != ids_.size()) throw ContractError("dataset: ids do not match images");
        if (patch_ < r || patch_ % r != 0)
            throw DataError("dataset: patch size " + std::to_string(patch_) +
                            " incompatible with scale " + std::to_string(r));
        for (std::size_t i = 0; i < images_.size(); ++i) {
            const auto& img = images_[i];
            if (img.rank() != 3) throw DataError("dataset: images must be [C,H,W]");
            for (int64_t y = 0; y + patch_ <= img.dim(1); y += patch_)
                for (int64_t x = 0; x + patch_ <= img.dim(2); x += patch_)
                    slots_.push_back({i, y, x});
        }
        if (slots_.empty())
            throw DataError("dataset: patch size " + std::to_string(patch_) + " fits no image");
    }

    std::size_t size() const { return slots_.size(); }
    int scale() const { return scale_; }

    ImagePair next() {
        if (perm_.empty()) perm_ = Rng::derive(seed_, cursor_.epoch).permutation(slots_.size());
        ImagePair pair = make_pair(perm_[static_cast<std::size_t>(cursor_.pos)],
                                   cursor_.epoch, cursor_.pos);
        ++cursor_.pos;
        if (cursor_.pos == slots_.size()) {
            cursor_.pos = 0;
            ++cursor_.epoch;
            perm_.clear();
        }
        return pair;
    }

    // Fixed slot-order enumeration (no shuffle, no augmentation), for
    // held-out evaluation.
    ImagePair at(std::size_t index) const { return make_pair(index, 0, 0, false); }

    Cursor cursor() const { return cursor_; }

    void seek(const Cursor& c) {
        if (c.pos >= slots_.size()) throw ContractError("dataset: cursor position out of range");
        cursor_ = c;
        perm_.clear();
    }

private:
    struct Slot {
        std::size_t image;
        int64_t y, x;
    };

    ImagePair make_pair(std::size_t slot_index, uint64_t epoch, uint64_t pos, bool allow_augment = true) const {
        const Slot& s = slots_[slot_index];
        const Tensor& img = images_[s.image];
        const int64_t C = img.dim(0);
        Tensor hr({C, patch_, patch_});
        for (int64_t c = 0; c < C; ++c)
            for (int64_t y = 0; y < patch_; ++y)
                for (int64_t x = 0; x < patch_; ++x)
                    hr.at({c, y, x}) = img.at({c, s.y + y, s.x + x});
        if (augment_ && allow_augment) {
            Rng arng = Rng::derive(seed_ ^ 0x9e3779b97f4a7c15ULL, epoch * slots_.size() + pos);
            hr = dihedral_transform(hr, static_cast<int>(arng.uniform_int(8)));
        }
        ImagePair pair;
        pair.scale = scale_;
        pair.id = ids_[s.image] + "_" + std::to_string(s.y) + "_" + std::to_string(s.x);
        pair.lr = degrade(hr, scale_, mode_, blur_sigma_);
        pair.hr = std::move(hr);
        return pair;
    }

    std::vector<Tensor> images_;
    std::vector<std::string> ids_;
    int scale_;
    int64_t patch_;
    uint64_t seed_;
    DegradeMode mode_;
    double blur_sigma_;
    bool augment_;
    std::vector<Slot> slots_;
    std::vector<uint64_t> perm_;
    Cursor cursor_;
};

// Loads every supported image in a directory, sorted by filename so the
// stream is a pure function of (directory contents, seed).
inline PatchDataset make_dataset(const std::string& image_dir, int r, int patch_size, uint64_t seed,
                                 DegradeMode mode = DegradeMode::blur_bicubic, double blur_sigma = -1.0,
                                 bool augment = false) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(image_dir)) throw DataError(image_dir + ": not a directory");
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(image_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = detail::lower_ext(entry.path().string());
        if (ext == "png" || ext == "pgm" || ext == "ppm" || ext == "pnm")
            paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw DataError(image_dir + ": no loadable images");
    std::vector<Tensor> images;
    std::vector<std::string> ids;
    for (const auto& p : paths) {
        images.push_back(load_image(p));
        ids.push_back(fs::path(p).stem().string());
    }
    return PatchDataset(std::move(images), std::move(ids), r, patch_size, seed, mode, blur_sigma, augment);
}

inline PatchDataset make_synthetic_dataset(int count, int size, int channels, int r, int patch_size,
                                           uint64_t seed, int skip_front = 0, int take = -1) {
    auto images = synthetic_corpus(count, size, channels, seed);
    std::vector<Tensor> subset;
    std::vector<std::string> ids;
    const int end = take < 0 ? count : std::min(count, skip_front + take);
    for (int i = skip_front; i < end; ++i) {
        subset.push_back(std::move(images[static_cast<std::size_t>(i)]));
        ids.push_back("synth" + std::to_string(i));
    }
    return PatchDataset(std::move(subset), std::move(ids), r, patch_size, seed + 1);
}

}  // namespace psrg
