#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "checkpoint.hpp"
#include "data.hpp"
#include "losses.hpp"
#include "models.hpp"

namespace psrg {

// One 2x super-resolution stage: its generator/discriminator pair, their
// optimizer states, and the freeze flag that protects finished stages.
struct StageSpec {
    int index = 1;
    Generator gen;
    Discriminator disc;
    AdamState gen_opt;
    AdamState disc_opt;
    bool frozen = false;
};

struct PipelineSpec {
    std::vector<StageSpec> stages;
    FeatureExtractor extractor;
    LossWeights weights;

    int num_stages() const { return static_cast<int>(stages.size()); }
    int total_scale() const { return 1 << stages.size(); }

    StageSpec& stage(int n) {
        if (n < 1 || n > num_stages())
            throw ContractError("pipeline: stage " + std::to_string(n) + " of " +
                                std::to_string(num_stages()));
        return stages[static_cast<std::size_t>(n - 1)];
    }
};

struct TrainSchedule {
    float pretrain_lr = 1e-4f;
    int64_t pretrain_iters = 1000;
    int64_t gan_iters_phase1 = 1000;
    float gan_lr_phase1 = 1e-4f;
    int64_t gan_iters_phase2 = 1000;
    float gan_lr_phase2 = 1e-5f;
    float beta1 = 0.9f;
    int64_t batch_size = 8;
    uint64_t seed = 0;
    int64_t checkpoint_every = 500;  // optimizer steps between checkpoints; 0 disables

    void validate() const {
        if (pretrain_iters < 0 || gan_iters_phase1 < 0 || gan_iters_phase2 < 0)
            throw ConfigError("schedule: iteration counts must be >= 0");
        if (!(pretrain_lr > 0.0f) || !(gan_lr_phase1 > 0.0f) || !(gan_lr_phase2 > 0.0f))
            throw ConfigError("schedule: learning rates must be > 0");
        if (batch_size < 1) throw ConfigError("schedule: batch_size must be >= 1");
        if (beta1 < 0.0f || beta1 >= 1.0f) throw ConfigError("schedule: beta1 must be in [0,1)");
        if (checkpoint_every < 0) throw ConfigError("schedule: checkpoint_every must be >= 0");
    }
};

// Everything needed to build a pipeline from scratch, deterministically.
struct PipelineBuild {
    int num_stages = 1;
    int hr_patch = 32;  // HR patch edge; the stage-1 input edge is hr_patch >> num_stages
    GeneratorConfig gen;
    std::vector<std::pair<int, int>> disc_ladder = DiscriminatorConfig::default_ladder();
    int disc_dense_width = 1024;
    LossWeights weights;
    // 0 selects the identity embedding; otherwise a seeded 5-layer extractor
    // starting at this width. A non-empty file path overrides both.
    int extractor_base_channels = 32;
    std::string extractor_file;
    uint64_t seed = 0;
};

inline PipelineSpec make_pipeline(const PipelineBuild& b) {
    if (b.num_stages < 1 || b.num_stages > 5)
        throw ConfigError("pipeline: num_stages must be in 1..5 (total scale 2..32)");
    const int lr_edge = b.hr_patch >> b.num_stages;
    if (lr_edge << b.num_stages != b.hr_patch || lr_edge < 8)
        throw ConfigError("pipeline: hr_patch must be a multiple of 2^num_stages with at least an "
                          "8 px base, got " + std::to_string(b.hr_patch));
    b.gen.validate();
    b.weights.validate();

    PipelineSpec pipe;
    pipe.weights = b.weights;
    if (!b.extractor_file.empty())
        pipe.extractor = load_feature_extractor(b.extractor_file);
    else if (b.extractor_base_channels == 0)
        pipe.extractor = make_identity_extractor(b.gen.input_channels);
    else
        pipe.extractor = make_feature_extractor(b.gen.input_channels, b.seed + 999331ULL,
                                                b.extractor_base_channels);

    for (int n = 1; n <= b.num_stages; ++n) {
        StageSpec st;
        st.index = n;
        st.gen = build_generator(b.gen, b.seed + 1000003ULL * static_cast<uint64_t>(n));
        DiscriminatorConfig dc;
        dc.channel_ladder = b.disc_ladder;
        dc.dense_width = b.disc_dense_width;
        dc.input_channels = b.gen.input_channels;
        dc.input_size = b.hr_patch >> (b.num_stages - n);
        st.disc = build_discriminator(dc, b.seed + 1000003ULL * static_cast<uint64_t>(n) + 500009ULL);
        st.gen_opt = AdamState::init(st.gen.params);
        st.disc_opt = AdamState::init(st.disc.params);
        pipe.stages.push_back(std::move(st));
    }
    return pipe;
}

inline void freeze_stage(PipelineSpec& pipe, int n) {
    StageSpec& st = pipe.stage(n);
    st.frozen = true;
    st.gen.params.set_trainable(false);
    st.disc.params.set_trainable(false);
}

// Chains the first `k` generators in eval mode with no tape. Accepts [C,H,W]
// or [N,C,H,W] and answers in kind.
inline Tensor chain_forward(PipelineSpec& pipe, int k, const Tensor& lr) {
    if (k < 0 || k > pipe.num_stages())
        throw ContractError("chain_forward: need 0 <= k <= " + std::to_string(pipe.num_stages()));
    NoGradGuard ng;
    const bool batched = lr.rank() == 4;
    if (!batched && lr.rank() != 3) throw ShapeError("chain_forward: input must be [C,H,W] or [N,C,H,W]");
    Tensor x = batched ? lr.detach() : reshape(lr.detach(), {1, lr.dim(0), lr.dim(1), lr.dim(2)});
    for (int i = 0; i < k; ++i) x = generator_forward(pipe.stages[static_cast<std::size_t>(i)].gen, x, false);
    if (!batched) x = reshape(x, {x.dim(1), x.dim(2), x.dim(3)});
    return x.detach();
}

inline Tensor super_resolve(PipelineSpec& pipe, const Tensor& lr, int target_scale) {
    int k = 0;
    while ((1 << k) < target_scale && k <= pipe.num_stages()) ++k;
    if (target_scale < 2 || (1 << k) != target_scale || k > pipe.num_stages()) {
        std::string supported;
        for (int i = 1; i <= pipe.num_stages(); ++i)
            supported += (i > 1 ? ", " : "") + std::to_string(1 << i);
        throw ConfigError("super_resolve: scale " + std::to_string(target_scale) +
                          " unsupported; this pipeline supports {" + supported + "}");
    }
    return chain_forward(pipe, k, lr);
}

// Feeds one sample through every stage in training mode (no tape) so each
// generator's batch-norm layers have running statistics before eval use.
inline void warm_pipeline_stats(PipelineSpec& pipe, const Tensor& lr_batch) {
    NoGradGuard ng;
    Tensor x = lr_batch.rank() == 4
                   ? lr_batch.detach()
                   : reshape(lr_batch.detach(), {1, lr_batch.dim(0), lr_batch.dim(1), lr_batch.dim(2)});
    for (auto& st : pipe.stages) x = generator_forward(st.gen, x, true).detach();
}

// An endless source of training pairs for one stage: lr is the stage input,
// hr the stage target, both sized for a single 2x step.
using PairStream = std::function<ImagePair()>;

// Adapts base pairs at the pipeline's full scale into stage-n pairs. The
// target is the ground truth degraded to the stage's output resolution; the
// input is the base LR for stage 1 and the frozen output of the preceding
// stages otherwise, which is also the triplet negative.
inline PairStream stage_stream(PipelineSpec& pipe, int n, PatchDataset& data) {
    const int K = pipe.num_stages();
    if (n < 1 || n > K) throw ContractError("stage_stream: stage out of range");
    if (data.scale() != (1 << K))
        throw ContractError("stage_stream: dataset scale " + std::to_string(data.scale()) +
                            " does not match pipeline scale " + std::to_string(1 << K));
    return [&pipe, &data, n, K]() {
        ImagePair base = data.next();
        ImagePair out;
        out.id = base.id;
        out.scale = 2;
        const int target_r = 1 << (K - n);
        out.hr = target_r == 1 ? base.hr : degrade(base.hr, target_r);
        out.lr = n == 1 ? base.lr : chain_forward(pipe, n - 1, base.lr);
        return out;
    };
}

namespace detail {

struct StageBatch {
    Tensor input;   // [B,C,h,w]
    Tensor target;  // [B,C,2h,2w]
};

inline StageBatch collect_batch(const PairStream& next_pair, int64_t batch_size) {
    std::vector<Tensor> xs, ys;
    xs.reserve(static_cast<std::size_t>(batch_size));
    ys.reserve(static_cast<std::size_t>(batch_size));
    for (int64_t b = 0; b < batch_size; ++b) {
        ImagePair p = next_pair();
        xs.push_back(std::move(p.lr));
        ys.push_back(std::move(p.hr));
    }
    StageBatch sb{stack_batch(xs), stack_batch(ys)};
    if (sb.target.dim(2) != 2 * sb.input.dim(2) || sb.target.dim(3) != 2 * sb.input.dim(3))
        throw ShapeError("stage batch: target must be exactly 2x the input resolution, got " +
                         shape_str(sb.input.shape()) + " -> " + shape_str(sb.target.shape()));
    return sb;
}

inline void require_stage_ready(PipelineSpec& pipe, int n, const char* what) {
    StageSpec& st = pipe.stage(n);
    if (st.frozen) throw ContractError(std::string(what) + ": stage " + std::to_string(n) + " is frozen");
    for (int i = 1; i < n; ++i)
        if (!pipe.stage(i).frozen)
            throw ContractError(std::string(what) + ": stage " + std::to_string(i) +
                                " must be frozen before stage " + std::to_string(n) + " trains");
}

}  // namespace detail

// Called after every optimizer iteration with the count of iterations now
// completed in the current phase; returning false stops the loop early.
using StepControl = std::function<bool(int64_t done)>;

// MSE-only generator warm-up. Returns the per-iteration loss history for the
// executed range [start_iter, pretrain_iters).
inline std::vector<float> pretrain_stage(PipelineSpec& pipe, int n, const PairStream& next_pair,
                                         const TrainSchedule& sched, std::FILE* log = nullptr,
                                         int64_t start_iter = 0, const StepControl& control = {}) {
    sched.validate();
    detail::require_stage_ready(pipe, n, "pretrain_stage");
    StageSpec& st = pipe.stage(n);
    st.gen_opt.beta1 = sched.beta1;

    std::vector<float> history;
    for (int64_t it = start_iter; it < sched.pretrain_iters; ++it) {
        auto batch = detail::collect_batch(next_pair, sched.batch_size);
        auto sr = generator_forward(st.gen, batch.input, true);
        auto loss = mse_loss(sr, batch.target);
        const float v = loss.item();
        st.gen.params.zero_grad();
        loss.backward();
        adam_step(st.gen.params, st.gen_opt, sched.pretrain_lr);
        history.push_back(v);
        if (log)
            std::fprintf(log, "stage=%d phase=pretrain iter=%lld lr=%.9g total=%.9g mse=%.9g\n", n,
                         static_cast<long long>(it), double(sched.pretrain_lr), double(v), double(v));
        if (control && !control(it + 1)) break;
    }
    return history;
}

// Per-iteration loss values. A plain value copy of StageLossT: keeping the
// live loss tensor here would pin every iteration's whole graph in memory.
struct StageLossRecord {
    float total = 0, mse = 0, feature = 0, adversarial = 0, triplet = 0;
};

struct GanHistory {
    std::vector<float> d_loss;
    std::vector<StageLossRecord> g_loss;
};

// Adversarial phase: per iteration one discriminator step on (real, detached
// fake) followed by one generator step on the full stage objective, running
// the phase-1 learning rate first and then phase 2.
inline GanHistory train_stage(PipelineSpec& pipe, int n, const PairStream& next_pair,
                              const TrainSchedule& sched, std::FILE* log = nullptr,
                              int64_t start_iter = 0, const StepControl& control = {}) {
    sched.validate();
    detail::require_stage_ready(pipe, n, "train_stage");
    StageSpec& st = pipe.stage(n);
    st.gen_opt.beta1 = sched.beta1;
    st.disc_opt.beta1 = sched.beta1;
    const int64_t total = sched.gan_iters_phase1 + sched.gan_iters_phase2;

    GanHistory hist;
    for (int64_t it = start_iter; it < total; ++it) {
        const float lr = it < sched.gan_iters_phase1 ? sched.gan_lr_phase1 : sched.gan_lr_phase2;
        auto batch = detail::collect_batch(next_pair, sched.batch_size);

        auto sr = generator_forward(st.gen, batch.input, true);

        auto d_real = discriminator_forward(st.disc, batch.target, true);
        auto d_fake = discriminator_forward(st.disc, sr.detach(), true);
        auto dl = discriminator_loss(d_real, d_fake);
        const float dv = dl.item();
        st.disc.params.zero_grad();
        dl.backward();
        adam_step(st.disc.params, st.disc_opt, lr);

        auto d_for_gen = discriminator_forward(st.disc, sr, true);
        auto sl = stage_loss(n, sr, n >= 2 ? batch.input : Tensor(), batch.target, d_for_gen,
                             pipe.extractor, pipe.weights);
        st.gen.params.zero_grad();
        sl.total.backward();
        adam_step(st.gen.params, st.gen_opt, lr);

        hist.d_loss.push_back(dv);
        hist.g_loss.push_back({sl.total.item(), sl.mse, sl.feature, sl.adversarial, sl.triplet});
        if (log)
            std::fprintf(log,
                         "stage=%d phase=gan iter=%lld lr=%.9g d_loss=%.9g total=%.9g mse=%.9g "
                         "feature=%.9g adversarial=%.9g triplet=%.9g\n",
                         n, static_cast<long long>(it), double(lr), double(dv),
                         double(sl.total.item()), double(sl.mse), double(sl.feature),
                         double(pipe.weights.alpha * sl.adversarial),
                         double(pipe.weights.triplet_weight * sl.triplet));
        if (control && !control(it + 1)) break;
    }
    return hist;
}

// Where a training run currently stands, in units that survive a checkpoint:
// which stage, which phase, how many iterations of that phase are done, plus
// the dataset cursor and the run-level RNG words.
enum class TrainPhase : uint64_t { pretrain = 0, gan = 1, done = 2 };

struct TrainState {
    int stage = 1;
    TrainPhase phase = TrainPhase::pretrain;
    int64_t iter = 0;
    PatchDataset::Cursor cursor;
    Rng rng{0};
};

inline void pack_pipeline(Checkpoint& cp, const PipelineSpec& pipe) {
    cp.add_scalar("pipeline/stages", static_cast<uint64_t>(pipe.stages.size()));
    for (const auto& st : pipe.stages) {
        const std::string p = "stage" + std::to_string(st.index);
        pack_params(cp, p + "/gen", st.gen.params);
        pack_params(cp, p + "/disc", st.disc.params);
        pack_adam(cp, p + "/gen_opt", st.gen_opt);
        pack_adam(cp, p + "/disc_opt", st.disc_opt);
        cp.add_scalar(p + "/frozen", st.frozen ? 1 : 0);
    }
}

inline void unpack_pipeline(const Checkpoint& cp, PipelineSpec& pipe) {
    if (cp.scalar("pipeline/stages") != pipe.stages.size())
        throw DataError("checkpoint: pipeline has " + std::to_string(cp.scalar("pipeline/stages")) +
                        " stages, build has " + std::to_string(pipe.stages.size()));
    for (auto& st : pipe.stages) {
        const std::string p = "stage" + std::to_string(st.index);
        unpack_params(cp, p + "/gen", st.gen.params);
        unpack_params(cp, p + "/disc", st.disc.params);
        unpack_adam(cp, p + "/gen_opt", st.gen_opt);
        unpack_adam(cp, p + "/disc_opt", st.disc_opt);
        const bool frozen = cp.scalar(p + "/frozen") != 0;
        if (frozen && !st.frozen) {
            st.frozen = true;
            st.gen.params.set_trainable(false);
            st.disc.params.set_trainable(false);
        }
    }
}

inline Checkpoint make_train_checkpoint(const PipelineSpec& pipe, const TrainState& state,
                                        const std::string& config_text) {
    Checkpoint cp;
    cp.config_text = config_text;
    pack_pipeline(cp, pipe);
    cp.add_scalar("progress/stage", static_cast<uint64_t>(state.stage));
    cp.add_scalar("progress/phase", static_cast<uint64_t>(state.phase));
    cp.add_scalar("progress/iter", static_cast<uint64_t>(state.iter));
    cp.add_scalar("data/epoch", state.cursor.epoch);
    cp.add_scalar("data/pos", state.cursor.pos);
    pack_rng(cp, "rng", state.rng);
    return cp;
}

inline TrainState restore_train_checkpoint(const Checkpoint& cp, PipelineSpec& pipe) {
    unpack_pipeline(cp, pipe);
    TrainState st;
    st.stage = static_cast<int>(cp.scalar("progress/stage"));
    const uint64_t phase = cp.scalar("progress/phase");
    if (phase > 2) throw DataError("checkpoint: bad phase marker");
    st.phase = static_cast<TrainPhase>(phase);
    st.iter = static_cast<int64_t>(cp.scalar("progress/iter"));
    st.cursor = {cp.scalar("data/epoch"), cp.scalar("data/pos")};
    unpack_rng(cp, "rng", st.rng);
    return st;
}

struct StageHistory {
    std::vector<float> pretrain;
    GanHistory gan;
};

struct TrainOptions {
    std::FILE* log = nullptr;
    std::string config_text;  // embedded in emitted checkpoints
    std::function<void(const Checkpoint&)> on_checkpoint;
    int64_t stop_after_steps = -1;  // interrupt hook for tests; -1 never stops
};

struct PipelineTrainResult {
    std::vector<StageHistory> history;  // index = stage - 1; resumed runs only cover executed iters
    TrainState final_state;
    bool completed = true;
};

// Full progressive run: each stage is MSE-pretrained, adversarially trained,
// then frozen before the next begins. Pass `resume` to continue a checkpoint;
// the pipeline must have been rebuilt from the same configuration first.
inline PipelineTrainResult train_pipeline(PipelineSpec& pipe, PatchDataset& data,
                                          const TrainSchedule& sched, const TrainOptions& opt = {},
                                          const TrainState* resume = nullptr) {
    sched.validate();
    const int K = pipe.num_stages();
    PipelineTrainResult result;
    result.history.resize(static_cast<std::size_t>(K));

    TrainState at;
    if (resume) {
        at = *resume;
        if (at.stage < 1 || at.stage > K) throw DataError("resume: stage out of range");
        if (at.phase == TrainPhase::done) {
            result.final_state = at;
            return result;
        }
        data.seek(at.cursor);
    } else {
        at.rng = Rng(sched.seed);
        at.cursor = data.cursor();
    }

    int64_t steps_this_run = 0;
    int64_t steps_since_checkpoint = 0;
    bool stopped = false;

    // Shared per-iteration bookkeeping: advance the live state, emit a
    // checkpoint on cadence, and honor the interrupt hook.
    auto controller = [&](int64_t done) {
        at.iter = done;
        at.cursor = data.cursor();
        ++steps_this_run;
        ++steps_since_checkpoint;
        if (sched.checkpoint_every > 0 && steps_since_checkpoint >= sched.checkpoint_every &&
            opt.on_checkpoint) {
            opt.on_checkpoint(make_train_checkpoint(pipe, at, opt.config_text));
            steps_since_checkpoint = 0;
        }
        if (opt.stop_after_steps >= 0 && steps_this_run >= opt.stop_after_steps) {
            stopped = true;
            return false;
        }
        return true;
    };

    for (int n = at.stage; n <= K && !stopped; ++n) {
        at.stage = n;
        StageHistory& hist = result.history[static_cast<std::size_t>(n - 1)];
        auto stream = stage_stream(pipe, n, data);

        if (at.phase == TrainPhase::pretrain) {
            hist.pretrain = pretrain_stage(pipe, n, stream, sched, opt.log, at.iter, controller);
            if (stopped) break;
            at.phase = TrainPhase::gan;
            at.iter = 0;
        }
        hist.gan = train_stage(pipe, n, stream, sched, opt.log, at.iter, controller);
        if (stopped) break;
        freeze_stage(pipe, n);
        at.phase = TrainPhase::pretrain;
        at.iter = 0;
    }

    if (!stopped) {
        at.stage = K;
        at.phase = TrainPhase::done;
        at.iter = 0;
    }
    at.cursor = data.cursor();
    result.final_state = at;
    result.completed = !stopped;
    return result;
}

}  // namespace psrg
