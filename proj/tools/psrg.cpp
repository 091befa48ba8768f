// psrg: command-line frontend for the progressive super-resolution engine.
// One subcommand per workflow; every run is reproducible from --seed plus the
// echoed config. Exit codes: 0 ok, 1 usage/config, 2 data, 3 numeric.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <psrg/psrg.hpp>

namespace fs = std::filesystem;

namespace {

std::string lower_ext(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

std::vector<std::string> list_images(const std::string& dir) {
    if (!fs::is_directory(dir)) throw psrg::DataError(dir + ": not a directory");
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = lower_ext(entry.path().string());
        if (ext == "png" || ext == "pgm" || ext == "ppm" || ext == "pnm")
            paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw psrg::DataError(dir + ": no loadable images (png/pgm/ppm/pnm)");
    return paths;
}

void pin_single_thread() {
#ifdef _WIN32
    _putenv_s("PSRG_THREADS", "1");
#else
    setenv("PSRG_THREADS", "1", 1);
#endif
}

struct DegradeArgs {
    std::string input, output;
    int scale = 2;
    std::string noise = "none";
    std::string mode = "blur_bicubic";
    double blur_sigma = -1.0;
    uint64_t seed = 0;
    int bits = 8;
};

void cmd_degrade(const DegradeArgs& a) {
    const auto paths = list_images(a.input);
    fs::create_directories(a.output);
    const psrg::DegradeMode mode = psrg::parse_degrade_mode(a.mode);
    const psrg::NoiseSpec base_noise = psrg::NoiseSpec::parse(a.noise);
    int written = 0;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const std::string& p = paths[i];
        try {
            psrg::Tensor hr = psrg::load_image(p);
            psrg::Tensor lr = psrg::degrade(hr, a.scale, mode, a.blur_sigma);
            if (base_noise.kind != psrg::NoiseKind::none) {
                psrg::NoiseSpec spec = base_noise;
                spec.seed = psrg::Rng::derive(a.seed, i).next_u64();
                lr = psrg::add_noise(lr, spec);
            }
            const std::string out = (fs::path(a.output) / fs::path(p).filename()).string();
            psrg::save_image(lr, out, a.bits);
            ++written;
        } catch (const psrg::Error& e) {
            throw psrg::DataError(p + ": " + e.what());
        }
    }
    std::printf("degraded %d image(s) by %dx into %s\n", written, a.scale, a.output.c_str());
}

struct TrainArgs {
    std::string config, output = "out", resume;
    uint64_t seed = 0;
    bool seed_set = false;
    int64_t scale = 0;
    int64_t iters = -1;
    int64_t stop_after = -1;
    bool deterministic = false;
};

void cmd_train(const TrainArgs& a) {
    psrg::RunConfig cfg = a.config.empty() ? psrg::RunConfig{} : psrg::load_config_file(a.config);
    if (a.seed_set) cfg.seed = a.seed;
    if (a.scale > 0) cfg.scale = a.scale;
    if (a.iters >= 0) {
        cfg.pretrain_iters = a.iters;
        cfg.gan_iters_phase1 = a.iters;
        cfg.gan_iters_phase2 = a.iters;
    }
    if (a.deterministic) cfg.deterministic = true;
    if (cfg.deterministic) pin_single_thread();

    fs::create_directories(a.output);
    const std::string canonical = psrg::canonical_config_text(cfg);
    psrg::write_text_file((fs::path(a.output) / "config.txt").string(), canonical);

    psrg::PatchDataset data = psrg::to_train_dataset(cfg);
    if (data.at(0).hr.dim(0) != cfg.channels)
        throw psrg::ConfigError("config says " + std::to_string(cfg.channels) +
                                " channel(s) but the corpus has " +
                                std::to_string(data.at(0).hr.dim(0)));
    psrg::PipelineSpec pipe = psrg::make_pipeline(psrg::to_pipeline_build(cfg));
    const psrg::TrainSchedule sched = psrg::to_schedule(cfg);

    psrg::TrainState resume_state;
    const psrg::TrainState* resume = nullptr;
    if (!a.resume.empty()) {
        const psrg::Checkpoint cp = psrg::Checkpoint::load(a.resume);
        if (cp.config_text != canonical)
            throw psrg::DataError(a.resume + ": checkpoint was produced by a different configuration");
        resume_state = psrg::restore_train_checkpoint(cp, pipe);
        resume = &resume_state;
    }

    const std::string log_path = (fs::path(a.output) / "train.log").string();
    std::FILE* log = std::fopen(log_path.c_str(), resume ? "ab" : "wb");
    if (!log) throw psrg::DataError("cannot open " + log_path);

    const std::string latest = (fs::path(a.output) / "checkpoint_latest.psrg").string();
    psrg::TrainOptions opt;
    opt.log = log;
    opt.config_text = canonical;
    opt.on_checkpoint = [&latest](const psrg::Checkpoint& cp) { cp.save(latest); };
    opt.stop_after_steps = a.stop_after;

    psrg::PipelineTrainResult result;
    try {
        result = psrg::train_pipeline(pipe, data, sched, opt, resume);
    } catch (...) {
        std::fclose(log);
        throw;
    }
    std::fclose(log);

    const auto final_cp = psrg::make_train_checkpoint(pipe, result.final_state, canonical);
    if (result.completed) {
        const std::string final_path = (fs::path(a.output) / "checkpoint_final.psrg").string();
        final_cp.save(final_path);
        std::printf("training complete: %d stage(s), total scale %dx, checkpoint %s\n",
                    pipe.num_stages(), pipe.total_scale(), final_path.c_str());
    } else {
        final_cp.save(latest);
        std::printf("training stopped at stage %d phase %llu iter %lld; resume with --resume %s\n",
                    result.final_state.stage,
                    static_cast<unsigned long long>(result.final_state.phase),
                    static_cast<long long>(result.final_state.iter), latest.c_str());
    }
}

struct SuperresArgs {
    std::string checkpoint, input, output;
    int scale = 0;  // 0 selects the pipeline's full factor
    int bits = 8;
    bool deterministic = false;
};

void cmd_superres(const SuperresArgs& a) {
    if (a.deterministic) pin_single_thread();
    const psrg::Checkpoint cp = psrg::Checkpoint::load(a.checkpoint);
    psrg::RunConfig cfg;
    psrg::apply_config_text(cfg, cp.config_text, a.checkpoint);
    psrg::PipelineSpec pipe = psrg::make_pipeline(psrg::to_pipeline_build(cfg));
    psrg::unpack_pipeline(cp, pipe);

    const psrg::Tensor lr = psrg::load_image(a.input);
    const int scale = a.scale == 0 ? pipe.total_scale() : a.scale;
    const psrg::Tensor sr = psrg::super_resolve(pipe, lr, scale);
    if (const auto parent = fs::path(a.output).parent_path(); !parent.empty())
        fs::create_directories(parent);
    psrg::save_image(sr, a.output, a.bits);
    std::printf("%s: %lldx%lld -> %lldx%lld (%dx) -> %s\n", a.input.c_str(),
                static_cast<long long>(lr.dim(1)), static_cast<long long>(lr.dim(2)),
                static_cast<long long>(sr.dim(1)), static_cast<long long>(sr.dim(2)), scale,
                a.output.c_str());
}

struct EvalArgs {
    std::string sr_dir, hr_dir, output;
    std::string method = "psrg";
    int scale = 2;
    std::string noise = "none";
};

void cmd_eval(const EvalArgs& a) {
    const auto sr_paths = list_images(a.sr_dir);
    const auto hr_paths = list_images(a.hr_dir);
    auto stem_of = [](const std::string& p) { return fs::path(p).stem().string(); };
    if (sr_paths.size() != hr_paths.size())
        throw psrg::DataError("misaligned sets: " + std::to_string(sr_paths.size()) + " SR vs " +
                              std::to_string(hr_paths.size()) + " HR images");
    for (std::size_t i = 0; i < sr_paths.size(); ++i)
        if (stem_of(sr_paths[i]) != stem_of(hr_paths[i]))
            throw psrg::DataError("misaligned sets: \"" + stem_of(sr_paths[i]) + "\" vs \"" +
                                  stem_of(hr_paths[i]) + "\"");

    std::vector<psrg::Tensor> sr_set, hr_set;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < sr_paths.size(); ++i) {
        sr_set.push_back(psrg::load_image(sr_paths[i]));
        hr_set.push_back(psrg::load_image(hr_paths[i]));
        ids.push_back(stem_of(sr_paths[i]));
        if (sr_set.back().shape() != hr_set.back().shape())
            throw psrg::DataError(ids.back() + ": SR shape " + psrg::shape_str(sr_set.back().shape()) +
                                  " differs from HR shape " + psrg::shape_str(hr_set.back().shape()));
    }

    psrg::MetricsReport report;
    psrg::evaluate(sr_set, hr_set, ids, a.method, a.scale, a.noise, report);
    const std::string csv = report.to_csv();
    if (a.output.empty() || a.output == "-") {
        std::fputs(csv.c_str(), stdout);
    } else {
        psrg::write_text_file(a.output, csv);
        std::printf("wrote %zu row(s) to %s\n", report.rows.size(), a.output.c_str());
    }
    for (const auto& g : report.aggregate())
        std::printf("group method=%s scale=%d noise=%s n=%d psnr=%.4f+-%.4f ssim=%.6f+-%.6f "
                    "s3=%.6f+-%.6f\n",
                    g.method.c_str(), g.scale, g.noise.c_str(), g.count, g.mean_psnr, g.std_psnr,
                    g.mean_ssim, g.std_ssim, g.mean_s3, g.std_s3);
}

struct SynthArgs {
    std::string output;
    int count = 200;
    int size = 32;
    int channels = 1;
    uint64_t seed = 0;
    int bits = 8;
};

void cmd_synth(const SynthArgs& a) {
    const auto images = psrg::synthetic_corpus(a.count, a.size, a.channels, a.seed);
    fs::create_directories(a.output);
    char name[64];
    for (std::size_t i = 0; i < images.size(); ++i) {
        std::snprintf(name, sizeof name, "synth%04zu.png", i);
        psrg::save_image(images[i], (fs::path(a.output) / name).string(), a.bits);
    }
    std::printf("wrote %d synthetic image(s) to %s\n", a.count, a.output.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"progressive multi-stage GAN super-resolution engine"};
    app.require_subcommand(1);
    int exit_code = 0;

    bool deterministic = false;
    app.add_flag("--deterministic", deterministic,
                 "pin the worker pool to one thread (results are bit-identical at any width; "
                 "this also removes scheduling jitter)");

    DegradeArgs da;
    auto* deg = app.add_subcommand("degrade", "synthesize LR images from an HR directory");
    deg->add_option("--input", da.input, "directory of HR images")->required();
    deg->add_option("--output", da.output, "directory for LR outputs")->required();
    deg->add_option("--scale", da.scale, "downscale factor (power of 2)")->default_val(2);
    deg->add_option("--noise", da.noise, "noise spec kind:param (gaussian/salt_pepper/speckle)");
    deg->add_option("--mode", da.mode, "blur_bicubic or bicubic_only");
    deg->add_option("--blur-sigma", da.blur_sigma, "anti-alias sigma; negative selects r/2");
    deg->add_option("--seed", da.seed, "noise RNG seed");
    deg->add_option("--bits", da.bits, "output bit depth, 8 or 16");
    deg->callback([&] { cmd_degrade(da); });

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "train a progressive SR pipeline");
    tr->add_option("--config", ta.config, "key=value config file; defaults used when omitted");
    tr->add_option("--output", ta.output, "run directory (config echo, log, checkpoints)");
    auto* seed_opt = tr->add_option("--seed", ta.seed, "override the config seed");
    tr->add_option("--scale", ta.scale, "override the total scale factor");
    tr->add_option("--iters", ta.iters, "override every phase's iteration count (0 trains nothing "
                                        "and checkpoints the initialization)");
    tr->add_option("--resume", ta.resume, "checkpoint to continue from");
    tr->add_option("--stop-after-steps", ta.stop_after, "stop after N optimizer steps this run")
        ->group("");  // test hook, hidden from help
    tr->callback([&] {
        ta.seed_set = seed_opt->count() > 0;
        ta.deterministic = deterministic;
        cmd_train(ta);
    });

    SuperresArgs sa;
    auto* sup = app.add_subcommand("superres", "run inference from a checkpoint");
    sup->add_option("--checkpoint", sa.checkpoint, "trained checkpoint")->required();
    sup->add_option("--input", sa.input, "LR input image")->required();
    sup->add_option("--output", sa.output, "SR output image")->required();
    sup->add_option("--scale", sa.scale, "target factor 2^k; defaults to the pipeline's full factor");
    sup->add_option("--bits", sa.bits, "output bit depth, 8 or 16");
    sup->callback([&] {
        sa.deterministic = deterministic;
        cmd_superres(sa);
    });

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "score SR images against ground truth");
    ev->add_option("--sr", ea.sr_dir, "directory of SR images")->required();
    ev->add_option("--hr", ea.hr_dir, "directory of matching HR images")->required();
    ev->add_option("--output", ea.output, "CSV path; - or empty for stdout");
    ev->add_option("--method", ea.method, "method label for the report");
    ev->add_option("--scale", ea.scale, "scale label for the report");
    ev->add_option("--noise", ea.noise, "noise label for the report");
    ev->callback([&] { cmd_eval(ea); });

    SynthArgs na;
    auto* sy = app.add_subcommand("synth", "write the built-in synthetic corpus to disk");
    sy->add_option("--output", na.output, "destination directory")->required();
    sy->add_option("--count", na.count, "number of images");
    sy->add_option("--size", na.size, "edge length in pixels");
    sy->add_option("--channels", na.channels, "1 or 3");
    sy->add_option("--seed", na.seed, "corpus seed");
    sy->add_option("--bits", na.bits, "output bit depth, 8 or 16");
    sy->callback([&] { cmd_synth(na); });

    bool inject_broken = false;
    double tolerance = 1e-4;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc->add_flag("--inject-broken", inject_broken, "append the known-bad fixture as a negative control");
    gc->add_option("--tolerance", tolerance, "max relative error allowed");
    gc->callback([&] {
        const auto results = psrg::run_gradchecks({}, inject_broken, tolerance, stdout);
        for (const auto& r : results)
            if (!r.pass) exit_code = 3;
        std::printf("%zu op(s) checked, %s\n", results.size(), exit_code == 0 ? "all pass" : "FAILURES");
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // --help and --version exit cleanly
    } catch (const psrg::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const psrg::DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const psrg::ShapeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const psrg::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const psrg::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return exit_code;
}
