#ifndef FREEGAN_TRAINER_HPP
#define FREEGAN_TRAINER_HPP

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "freegan/checkpoint.hpp"
#include "freegan/common.hpp"
#include "freegan/dsp.hpp"
#include "freegan/losses.hpp"
#include "freegan/model.hpp"
#include "freegan/optim.hpp"
#include "freegan/prng.hpp"

// Deterministic training loop. Sampling is driven by a counter-based PRNG
// (splitmix64 over (seed, step, item, draw)), so a run is a pure function of
// (seed, config, dataset bytes) and resuming replays the exact sequence.

namespace freegan {

struct TrainConfig {
    SpectralConfig spectral;
    ModelConfig model;
    AdamWConfig optim;
    LossWeights loss_weights;
    real rho = 2.5;
    bool fwaw_weighted = true;  // ablation: false = unweighted anti-wrapping loss
    long steps = 5000;
    int batch_size = 16;
    int segment_frames = 64;
    uint64_t seed = 1234;
    long checkpoint_every = 1000;
    real grad_clip = 0.0;  // global L2 gradient-norm cap; 0 disables

    // frequency weights actually applied (all ones when ablated)
    FwawWeights weights() const {
        return fwaw_weights(spectral.n_freq(), fwaw_weighted ? rho : 1.0);
    }

    void validate() const {
        spectral.validate();
        if (steps < 1) throw ConfigError("steps must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (segment_frames < 2) throw ConfigError("segment_frames must be >= 2");
        if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
        if (!(rho > 0)) throw DomainError("rho must be positive");
    }
};

struct Checkpoint {
    TrainConfig cfg;
    ModelParams model;
    OptimState opt;
    long step = 0;
};

struct Dataset {
    std::vector<std::string> names;
    std::vector<std::vector<real>> waves;  // mono, [-1, 1], at spectral.sample_rate_hz

    size_t size() const { return waves.size(); }
};

// ---------------------------------------------------------------------------
// checkpoint <-> tensor list
// ---------------------------------------------------------------------------

namespace detail {

inline CheckpointTensor scalar_tensor(const std::string& name, real v) {
    return {name, {1}, {static_cast<float>(v)}};
}

inline void push_cfg(std::vector<CheckpointTensor>& out, const TrainConfig& c) {
    const auto& s = c.spectral;
    const auto& m = c.model;
    const auto& o = c.optim;
    out.push_back(scalar_tensor("cfg/sample_rate_hz", s.sample_rate_hz));
    out.push_back(scalar_tensor("cfg/frame_len", s.frame_len));
    out.push_back(scalar_tensor("cfg/frame_shift", s.frame_shift));
    out.push_back(scalar_tensor("cfg/fft_size", s.fft_size));
    out.push_back(scalar_tensor("cfg/mel_bins", s.mel_bins));
    out.push_back(scalar_tensor("cfg/amp_floor", s.amp_floor));
    out.push_back(scalar_tensor("cfg/width", m.width));
    out.push_back(scalar_tensor("cfg/expansion", m.expansion));
    out.push_back(scalar_tensor("cfg/kernel", m.kernel));
    out.push_back(scalar_tensor("cfg/activation", m.activation == Activation::Gelu ? 1 : 0));
    out.push_back(scalar_tensor("cfg/prior", m.prior == PriorMode::LearnableLinear ? 1 : 0));
    out.push_back(scalar_tensor("cfg/phase_detach", m.phase_detach_amplitude ? 1 : 0));
    out.push_back(scalar_tensor("cfg/phase_concat_prior", m.phase_concat_prior ? 1 : 0));
    out.push_back(scalar_tensor("cfg/fwaw_weighted", c.fwaw_weighted ? 1 : 0));
    out.push_back(scalar_tensor("cfg/rho", c.rho));
    out.push_back(scalar_tensor("cfg/lambda_a", c.loss_weights.lambda_a));
    out.push_back(scalar_tensor("cfg/lambda_s", c.loss_weights.lambda_s));
    out.push_back(scalar_tensor("cfg/lambda_mel", c.loss_weights.lambda_mel));
    out.push_back(scalar_tensor("cfg/lr", o.lr));
    out.push_back(scalar_tensor("cfg/beta1", o.beta1));
    out.push_back(scalar_tensor("cfg/beta2", o.beta2));
    out.push_back(scalar_tensor("cfg/eps", o.eps));
    out.push_back(scalar_tensor("cfg/weight_decay", o.weight_decay));
    out.push_back(scalar_tensor("cfg/lr_decay", o.lr_decay));
    out.push_back(scalar_tensor("cfg/steps", static_cast<real>(c.steps)));
    out.push_back(scalar_tensor("cfg/batch_size", c.batch_size));
    out.push_back(scalar_tensor("cfg/segment_frames", c.segment_frames));
    out.push_back(scalar_tensor("cfg/checkpoint_every", static_cast<real>(c.checkpoint_every)));
    out.push_back(scalar_tensor("cfg/grad_clip", c.grad_clip));
    // seed split into 16-bit pieces so every bit survives the f32 payload
    for (int i = 0; i < 4; ++i)
        out.push_back(scalar_tensor("cfg/seed" + std::to_string(i),
                                    static_cast<real>((c.seed >> (16 * i)) & 0xFFFF)));
}

struct CfgReader {
    const std::vector<CheckpointTensor>* tensors;
    real get(const std::string& name) const {
        for (const auto& t : *tensors)
            if (t.name == name) {
                if (t.values.size() != 1) throw FormatError("config tensor not scalar: " + name);
                return t.values[0];
            }
        throw FormatError("missing config tensor: " + name);
    }
};

inline TrainConfig read_cfg(const std::vector<CheckpointTensor>& tensors) {
    CfgReader r{&tensors};
    TrainConfig c;
    c.spectral.sample_rate_hz = static_cast<int>(r.get("cfg/sample_rate_hz"));
    c.spectral.frame_len = static_cast<int>(r.get("cfg/frame_len"));
    c.spectral.frame_shift = static_cast<int>(r.get("cfg/frame_shift"));
    c.spectral.fft_size = static_cast<int>(r.get("cfg/fft_size"));
    c.spectral.mel_bins = static_cast<int>(r.get("cfg/mel_bins"));
    c.spectral.amp_floor = r.get("cfg/amp_floor");
    c.model.width = static_cast<int>(r.get("cfg/width"));
    c.model.expansion = static_cast<int>(r.get("cfg/expansion"));
    c.model.kernel = static_cast<int>(r.get("cfg/kernel"));
    c.model.activation = r.get("cfg/activation") != 0 ? Activation::Gelu : Activation::Snake;
    c.model.prior = r.get("cfg/prior") != 0 ? PriorMode::LearnableLinear : PriorMode::PseudoInverse;
    c.model.phase_detach_amplitude = r.get("cfg/phase_detach") != 0;
    c.model.phase_concat_prior = r.get("cfg/phase_concat_prior") != 0;
    c.fwaw_weighted = r.get("cfg/fwaw_weighted") != 0;
    c.rho = r.get("cfg/rho");
    c.loss_weights.lambda_a = r.get("cfg/lambda_a");
    c.loss_weights.lambda_s = r.get("cfg/lambda_s");
    c.loss_weights.lambda_mel = r.get("cfg/lambda_mel");
    c.optim.lr = r.get("cfg/lr");
    c.optim.beta1 = r.get("cfg/beta1");
    c.optim.beta2 = r.get("cfg/beta2");
    c.optim.eps = r.get("cfg/eps");
    c.optim.weight_decay = r.get("cfg/weight_decay");
    c.optim.lr_decay = r.get("cfg/lr_decay");
    c.steps = static_cast<long>(r.get("cfg/steps"));
    c.batch_size = static_cast<int>(r.get("cfg/batch_size"));
    c.segment_frames = static_cast<int>(r.get("cfg/segment_frames"));
    c.checkpoint_every = static_cast<long>(r.get("cfg/checkpoint_every"));
    c.grad_clip = r.get("cfg/grad_clip");
    uint64_t seed = 0;
    for (int i = 0; i < 4; ++i)
        seed |= static_cast<uint64_t>(r.get("cfg/seed" + std::to_string(i))) << (16 * i);
    c.seed = seed;
    return c;
}

inline std::vector<uint32_t> shape_dims(const ad::Shape& s) {
    std::vector<uint32_t> d;
    for (int i = 0; i < s.rank; ++i) d.push_back(static_cast<uint32_t>(s.d[i]));
    return d;
}

inline CheckpointTensor value_tensor(const std::string& name, const ad::Shape& shape,
                                     const std::vector<real>& values) {
    CheckpointTensor t;
    t.name = name;
    t.dims = shape_dims(shape);
    t.values.reserve(values.size());
    for (real v : values) t.values.push_back(static_cast<float>(v));
    return t;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::vector<CheckpointTensor> tensors;
    detail::push_cfg(tensors, ckpt.cfg);
    tensors.push_back(detail::scalar_tensor("opt/step", static_cast<real>(ckpt.step)));
    for (const auto& p : ckpt.model.params)
        tensors.push_back(detail::value_tensor("model/" + p.name, p.shape, p.value));
    for (size_t i = 0; i < ckpt.model.params.size(); ++i) {
        const auto& p = ckpt.model.params[i];
        tensors.push_back(detail::value_tensor("opt/m/" + p.name, p.shape, ckpt.opt.m[i]));
        tensors.push_back(detail::value_tensor("opt/v/" + p.name, p.shape, ckpt.opt.v[i]));
    }
    write_checkpoint_file(path, tensors);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    const auto tensors = read_checkpoint_file(path);
    Checkpoint ckpt;
    ckpt.cfg = detail::read_cfg(tensors);
    ckpt.cfg.validate();
    // rebuild the expected tensor set from the stored config, then fill it
    ckpt.model = init_model(ckpt.cfg.spectral, ckpt.cfg.model, ckpt.cfg.seed);
    ckpt.opt.init(ckpt.model.params);

    auto find = [&](const std::string& name) -> const CheckpointTensor& {
        for (const auto& t : tensors)
            if (t.name == name) return t;
        throw FormatError("missing tensor: " + name);
    };
    auto fill = [](const CheckpointTensor& t, const ad::Shape& shape, std::vector<real>& out) {
        if (t.dims != detail::shape_dims(shape))
            throw FormatError("tensor shape mismatch: " + t.name);
        out.assign(t.values.begin(), t.values.end());
    };
    for (size_t i = 0; i < ckpt.model.params.size(); ++i) {
        auto& p = ckpt.model.params[i];
        fill(find("model/" + p.name), p.shape, p.value);
        fill(find("opt/m/" + p.name), p.shape, ckpt.opt.m[i]);
        fill(find("opt/v/" + p.name), p.shape, ckpt.opt.v[i]);
    }
    ckpt.step = static_cast<long>(find("opt/step").values.at(0));
    ckpt.opt.step = ckpt.step;
    return ckpt;
}

// Structural compatibility between a loaded checkpoint and the runtime
// config. Reported as FormatError naming the first mismatched tensor, so a
// checkpoint from a different ablation fails loudly instead of mistraining.
inline void validate_resume_compat(const Checkpoint& ckpt, const TrainConfig& runtime) {
    const ModelParams expect = init_model(runtime.spectral, runtime.model, runtime.seed);
    for (const auto& p : expect.params) {
        auto it = ckpt.model.index.find(p.name);
        if (it == ckpt.model.index.end())
            throw FormatError("checkpoint missing tensor: model/" + p.name);
        if (!(ckpt.model.params[it->second].shape == p.shape))
            throw FormatError("tensor shape mismatch: model/" + p.name);
    }
    for (const auto& p : ckpt.model.params)
        if (expect.index.find(p.name) == expect.index.end())
            throw FormatError("checkpoint has unexpected tensor: model/" + p.name);
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

inline std::string format_log_line(long step, const LossReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%ld\t%.10e\t%.10e\t%.10e\t%.10e\t%.10e\t%.10e\t%.10e", step, r.ip, r.gd,
                  r.iaf, r.amplitude, r.stft, r.mel, r.total);
    return buf;
}

struct TrainHooks {
    std::function<void(long, const LossReport&)> on_step;      // after each optimizer step
    std::function<void(const Checkpoint&)> on_checkpoint;      // at checkpoint_every and at the end
};

// Runs (cfg.steps - start.step) steps. Pass a loaded checkpoint to resume;
// training then continues with the identical sampling sequence.
inline Checkpoint train(const TrainConfig& cfg, const Dataset& dataset, const TrainHooks& hooks = {},
                        const Checkpoint* resume = nullptr) {
    cfg.validate();
    if (dataset.size() == 0) throw InvalidInput("train: empty dataset");
    const SpectralConfig& sc = cfg.spectral;
    const long seg_len = static_cast<long>(cfg.segment_frames - 1) * sc.frame_shift;
    for (size_t u = 0; u < dataset.size(); ++u)
        if (static_cast<long>(dataset.waves[u].size()) <
            static_cast<long>(cfg.segment_frames) * sc.frame_shift)
            throw InvalidInput("train: utterance shorter than a training segment: " +
                               dataset.names[u]);

    Checkpoint state;
    if (resume) {
        state = *resume;
    } else {
        state.cfg = cfg;
        state.model = init_model(sc, cfg.model, cfg.seed);
        state.opt.init(state.model.params);
        state.step = 0;
    }
    state.cfg = cfg;  // runtime config wins for loop bounds / hyperparameters

    const MelFilter filt = mel_filterbank(sc);
    const SynthBasis basis = make_synth_basis(sc);
    const FwawWeights wt = cfg.weights();
    const long B = cfg.batch_size, F = cfg.segment_frames;
    const long N = sc.n_freq(), K = sc.mel_bins;

    Targets tg;
    tg.mel.resize(static_cast<size_t>(B) * F * K);
    tg.log_amp.resize(static_cast<size_t>(B) * F * N);
    tg.phase.resize(static_cast<size_t>(B) * F * N);
    std::vector<real> segment(static_cast<size_t>(seg_len));

    for (long step = state.step + 1; step <= cfg.steps; ++step) {
        // assemble batch targets
        for (long b = 0; b < B; ++b) {
            const uint64_t u = counter_rand(cfg.seed, static_cast<uint64_t>(step), b, 0) %
                               dataset.size();
            const auto& wave = dataset.waves[u];
            const long span = static_cast<long>(wave.size()) - seg_len;
            const long start = static_cast<long>(
                counter_rand(cfg.seed, static_cast<uint64_t>(step), b, 1) %
                static_cast<uint64_t>(span + 1));
            segment.assign(wave.begin() + start, wave.begin() + start + seg_len);
            auto [amp, phase] = stft(segment, sc);
            if (amp.frames != F) throw ShapeError("train: unexpected segment frame count");
            const Spectrogram mel = mel_project(amp, filt);
            for (long f = 0; f < F; ++f)
                for (long n = 0; n < N; ++n) {
                    const size_t src = static_cast<size_t>(f) * N + n;
                    const size_t dst = (static_cast<size_t>(b) * F + f) * N + n;
                    tg.log_amp[dst] = std::log(std::max(amp.data[src], sc.amp_floor));
                    tg.phase[dst] = phase.data[src];
                }
            for (long f = 0; f < F; ++f)
                for (long k = 0; k < K; ++k)
                    tg.mel[(static_cast<size_t>(b) * F + f) * K + k] =
                        std::max(mel.data[static_cast<size_t>(f) * K + k], sc.amp_floor);
        }

        ad::Graph g;
        ForwardGraph fg = build_forward(g, state.model, filt, basis, tg.mel, B, F, true);
        LossGraph lg = build_losses(g, fg.predictions(), basis, filt, tg, B, F, wt,
                                    cfg.loss_weights);
        const LossReport report = lg.values();
        if (!std::isfinite(report.total))
            throw NumericalError("train: non-finite loss at step " + std::to_string(step));
        g.backward(lg.total);

        std::vector<const std::vector<real>*> grads;
        grads.reserve(state.model.params.size());
        for (auto* leaf : fg.gm.leaves) grads.push_back(&leaf->grad());
        if (cfg.grad_clip > 0.0) {
            real sq = 0.0;
            for (auto* leaf : fg.gm.leaves)
                for (real gv : leaf->grad()) sq += gv * gv;
            const real norm = std::sqrt(sq);
            if (norm > cfg.grad_clip) {
                const real scale = cfg.grad_clip / norm;
                for (auto* leaf : fg.gm.leaves)
                    for (real& gv : leaf->grad()) gv *= scale;
            }
        }
        adamw_step(state.model.params, grads, state.opt, cfg.optim);
        state.step = state.opt.step;

        if (hooks.on_step) hooks.on_step(step, report);
        if (hooks.on_checkpoint && (step % cfg.checkpoint_every == 0) && step != cfg.steps)
            hooks.on_checkpoint(state);
    }
    if (hooks.on_checkpoint) hooks.on_checkpoint(state);
    return state;
}

}  // namespace freegan

#endif  // FREEGAN_TRAINER_HPP
