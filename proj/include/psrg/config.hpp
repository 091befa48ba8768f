#pragma once

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "data.hpp"
#include "progressive.hpp"

namespace psrg {

// Every tunable of a run as one flat key=value record. The field table below
// is the single source of truth: parsing, overriding, and the canonical echo
// all walk it, so a key that exists can always be round-tripped and a key
// that does not is always rejected.
struct RunConfig {
    // data
    std::string data_dir;          // empty selects the built-in synthetic corpus
    int64_t synthetic_count = 200;
    int64_t synthetic_size = 32;
    int64_t channels = 1;
    int64_t holdout = 20;          // trailing synthetic images reserved for eval
    std::string degrade_mode = "blur_bicubic";  // or "bicubic_only"
    double blur_sigma = -1.0;      // < 0 selects the r/2 default
    bool augment = false;
    std::string noise = "none";    // kind:param, applied by the degrade command only

    // pipeline
    int64_t scale = 2;
    int64_t patch = 32;            // HR patch edge
    int64_t base_channels = 64;
    int64_t residual_blocks = 4;
    int64_t head_kernel = 9;
    bool sigmoid_output = true;
    std::string disc_ladder = "64:1,64:2,128:1,128:2,256:1,256:2,512:1,512:2";
    int64_t disc_dense_width = 1024;
    int64_t extractor_base_channels = 32;  // 0 selects the identity embedding
    std::string extractor_file;

    // losses
    double alpha = 0.01;
    double feature_scale = 1.0 / 12.75;
    bool rescale_loss_directly = false;
    double triplet_weight = 0.1;
    double triplet_margin = 1.0;
    std::string triplet_mode = "hinged";  // or "literal"
    bool triplet_raw_pixels = false;

    // schedule
    double pretrain_lr = 1e-4;
    int64_t pretrain_iters = 1000;
    int64_t gan_iters_phase1 = 1000;
    double gan_lr_phase1 = 1e-4;
    int64_t gan_iters_phase2 = 1000;
    double gan_lr_phase2 = 1e-5;
    double beta1 = 0.9;
    int64_t batch_size = 8;
    int64_t checkpoint_every = 500;

    uint64_t seed = 0;
    bool deterministic = false;  // pins the worker pool to one thread
};

namespace detail {

inline int64_t parse_i64(const std::string& key, const std::string& v) {
    try {
        std::size_t idx = 0;
        const long long r = std::stoll(v, &idx);
        if (idx != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects an integer, got \"" + v + "\"");
    }
}

inline uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t idx = 0;
        const unsigned long long r = std::stoull(v, &idx);
        if (idx != v.size() || v.find('-') != std::string::npos) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a non-negative integer, got \"" + v + "\"");
    }
}

inline double parse_f64(const std::string& key, const std::string& v) {
    try {
        std::size_t idx = 0;
        const double r = std::stod(v, &idx);
        if (idx != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: " + key + " expects a number, got \"" + v + "\"");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: " + key + " expects true/false, got \"" + v + "\"");
}

// Shortest decimal text that parses back to exactly the same double, so the
// echoed config is both readable and loss-free.
inline std::string format_f64(double v) {
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::stod(buf) == v) break;
    }
    return buf;
}

struct ConfigField {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<ConfigField>& config_fields() {
    auto i64 = [](const char* key, int64_t RunConfig::*member) {
        return ConfigField{key,
                           [key, member](RunConfig& c, const std::string& v) { c.*member = parse_i64(key, v); },
                           [member](const RunConfig& c) { return std::to_string(c.*member); }};
    };
    auto f64 = [](const char* key, double RunConfig::*member) {
        return ConfigField{key,
                           [key, member](RunConfig& c, const std::string& v) { c.*member = parse_f64(key, v); },
                           [member](const RunConfig& c) { return format_f64(c.*member); }};
    };
    auto boolean = [](const char* key, bool RunConfig::*member) {
        return ConfigField{key,
                           [key, member](RunConfig& c, const std::string& v) { c.*member = parse_bool(key, v); },
                           [member](const RunConfig& c) { return c.*member ? "true" : "false"; }};
    };
    auto str = [](const char* key, std::string RunConfig::*member) {
        return ConfigField{key, [member](RunConfig& c, const std::string& v) { c.*member = v; },
                           [member](const RunConfig& c) { return c.*member; }};
    };
    static const std::vector<ConfigField> fields = {
        str("data_dir", &RunConfig::data_dir),
        i64("synthetic_count", &RunConfig::synthetic_count),
        i64("synthetic_size", &RunConfig::synthetic_size),
        i64("channels", &RunConfig::channels),
        i64("holdout", &RunConfig::holdout),
        str("degrade_mode", &RunConfig::degrade_mode),
        f64("blur_sigma", &RunConfig::blur_sigma),
        boolean("augment", &RunConfig::augment),
        str("noise", &RunConfig::noise),
        i64("scale", &RunConfig::scale),
        i64("patch", &RunConfig::patch),
        i64("base_channels", &RunConfig::base_channels),
        i64("residual_blocks", &RunConfig::residual_blocks),
        i64("head_kernel", &RunConfig::head_kernel),
        boolean("sigmoid_output", &RunConfig::sigmoid_output),
        str("disc_ladder", &RunConfig::disc_ladder),
        i64("disc_dense_width", &RunConfig::disc_dense_width),
        i64("extractor_base_channels", &RunConfig::extractor_base_channels),
        str("extractor_file", &RunConfig::extractor_file),
        f64("alpha", &RunConfig::alpha),
        f64("feature_scale", &RunConfig::feature_scale),
        boolean("rescale_loss_directly", &RunConfig::rescale_loss_directly),
        f64("triplet_weight", &RunConfig::triplet_weight),
        f64("triplet_margin", &RunConfig::triplet_margin),
        str("triplet_mode", &RunConfig::triplet_mode),
        boolean("triplet_raw_pixels", &RunConfig::triplet_raw_pixels),
        f64("pretrain_lr", &RunConfig::pretrain_lr),
        i64("pretrain_iters", &RunConfig::pretrain_iters),
        i64("gan_iters_phase1", &RunConfig::gan_iters_phase1),
        f64("gan_lr_phase1", &RunConfig::gan_lr_phase1),
        i64("gan_iters_phase2", &RunConfig::gan_iters_phase2),
        f64("gan_lr_phase2", &RunConfig::gan_lr_phase2),
        f64("beta1", &RunConfig::beta1),
        i64("batch_size", &RunConfig::batch_size),
        i64("checkpoint_every", &RunConfig::checkpoint_every),
        ConfigField{"seed",
                    [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
                    [](const RunConfig& c) { return std::to_string(c.seed); }},
        boolean("deterministic", &RunConfig::deterministic),
    };
    return fields;
}

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
    while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
    return s.substr(a, b - a);
}

}  // namespace detail

inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& f : detail::config_fields()) {
        if (f.key == key) {
            f.set(cfg, value);
            return;
        }
    }
    throw ConfigError("config: unknown key \"" + key + "\"");
}

// key=value per line, # starts a comment, blank lines ignored.
inline void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
    std::size_t pos = 0;
    int line_no = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value, got \"" +
                              line + "\"");
        apply_config_entry(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        if (pos > text.size()) break;
    }
}

inline RunConfig load_config_file(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open config file " + path);
    std::string text;
    char buf[4096];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, got);
    std::fclose(f);
    RunConfig cfg;
    apply_config_text(cfg, text, path);
    return cfg;
}

// Field-table order, which is declaration order, one key=value per line.
// Deterministic down to the byte for identical configs.
inline std::string canonical_config_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : detail::config_fields()) out += f.key + "=" + f.get(cfg) + "\n";
    return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot write " + path);
    const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
    std::fclose(f);
    if (!ok) throw DataError("short write to " + path);
}

inline std::vector<std::pair<int, int>> parse_disc_ladder(const std::string& text) {
    std::vector<std::pair<int, int>> ladder;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t comma = text.find(',', start);
        if (comma == std::string::npos) comma = text.size();
        const std::string item = detail::trim(text.substr(start, comma - start));
        start = comma + 1;
        if (item.empty()) continue;
        const auto colon = item.find(':');
        if (colon == std::string::npos)
            throw ConfigError("disc_ladder: expected channels:stride, got \"" + item + "\"");
        ladder.emplace_back(static_cast<int>(detail::parse_i64("disc_ladder", item.substr(0, colon))),
                            static_cast<int>(detail::parse_i64("disc_ladder", item.substr(colon + 1))));
    }
    if (ladder.empty()) throw ConfigError("disc_ladder: empty");
    return ladder;
}

inline int scale_to_stages(int64_t scale) {
    for (int k = 1; k <= 5; ++k)
        if (scale == (1 << k)) return k;
    throw ConfigError("scale must be one of 2, 4, 8, 16, 32; got " + std::to_string(scale));
}

inline DegradeMode parse_degrade_mode(const std::string& s) {
    if (s == "blur_bicubic") return DegradeMode::blur_bicubic;
    if (s == "bicubic_only") return DegradeMode::bicubic_only;
    throw ConfigError("degrade_mode must be blur_bicubic or bicubic_only, got \"" + s + "\"");
}

inline PipelineBuild to_pipeline_build(const RunConfig& cfg) {
    PipelineBuild b;
    b.num_stages = scale_to_stages(cfg.scale);
    b.hr_patch = static_cast<int>(cfg.patch);
    b.gen.input_channels = static_cast<int>(cfg.channels);
    b.gen.base_channels = static_cast<int>(cfg.base_channels);
    b.gen.num_residual_blocks = static_cast<int>(cfg.residual_blocks);
    b.gen.head_kernel = static_cast<int>(cfg.head_kernel);
    b.gen.sigmoid_output = cfg.sigmoid_output;
    b.disc_ladder = parse_disc_ladder(cfg.disc_ladder);
    b.disc_dense_width = static_cast<int>(cfg.disc_dense_width);
    b.weights.alpha = static_cast<float>(cfg.alpha);
    b.weights.feature_scale = static_cast<float>(cfg.feature_scale);
    b.weights.rescale_loss_directly = cfg.rescale_loss_directly;
    b.weights.triplet_weight = static_cast<float>(cfg.triplet_weight);
    b.weights.triplet_margin = static_cast<float>(cfg.triplet_margin);
    b.weights.triplet_raw_pixels = cfg.triplet_raw_pixels;
    if (cfg.triplet_mode == "hinged") b.weights.triplet_mode = TripletMode::hinged;
    else if (cfg.triplet_mode == "literal") b.weights.triplet_mode = TripletMode::literal;
    else throw ConfigError("triplet_mode must be hinged or literal, got \"" + cfg.triplet_mode + "\"");
    b.extractor_base_channels = static_cast<int>(cfg.extractor_base_channels);
    b.extractor_file = cfg.extractor_file;
    b.seed = cfg.seed;
    return b;
}

inline TrainSchedule to_schedule(const RunConfig& cfg) {
    TrainSchedule s;
    s.pretrain_lr = static_cast<float>(cfg.pretrain_lr);
    s.pretrain_iters = cfg.pretrain_iters;
    s.gan_iters_phase1 = cfg.gan_iters_phase1;
    s.gan_lr_phase1 = static_cast<float>(cfg.gan_lr_phase1);
    s.gan_iters_phase2 = cfg.gan_iters_phase2;
    s.gan_lr_phase2 = static_cast<float>(cfg.gan_lr_phase2);
    s.beta1 = static_cast<float>(cfg.beta1);
    s.batch_size = cfg.batch_size;
    s.seed = cfg.seed;
    s.checkpoint_every = cfg.checkpoint_every;
    s.validate();
    return s;
}

// The training dataset described by the config: either a directory corpus or
// the synthetic one, minus the trailing holdout images.
inline PatchDataset to_train_dataset(const RunConfig& cfg) {
    const int r = static_cast<int>(cfg.scale);
    const int patch = static_cast<int>(cfg.patch);
    if (!cfg.data_dir.empty())
        return make_dataset(cfg.data_dir, r, patch, cfg.seed, parse_degrade_mode(cfg.degrade_mode),
                            cfg.blur_sigma, cfg.augment);
    const int count = static_cast<int>(cfg.synthetic_count);
    const int hold = static_cast<int>(cfg.holdout);
    if (hold < 0 || hold >= count)
        throw ConfigError("holdout must be in [0, synthetic_count), got " + std::to_string(hold));
    return make_synthetic_dataset(count, static_cast<int>(cfg.synthetic_size),
                                  static_cast<int>(cfg.channels), r, patch, cfg.seed, 0, count - hold);
}

inline PatchDataset to_holdout_dataset(const RunConfig& cfg) {
    if (!cfg.data_dir.empty())
        throw ConfigError("holdout split is only defined for the synthetic corpus");
    const int count = static_cast<int>(cfg.synthetic_count);
    const int hold = static_cast<int>(cfg.holdout);
    if (hold < 1 || hold >= count)
        throw ConfigError("holdout must be in [1, synthetic_count), got " + std::to_string(hold));
    return make_synthetic_dataset(count, static_cast<int>(cfg.synthetic_size),
                                  static_cast<int>(cfg.channels), static_cast<int>(cfg.scale),
                                  static_cast<int>(cfg.patch), cfg.seed, count - hold, hold);
}

}  // namespace psrg
