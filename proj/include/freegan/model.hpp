#ifndef FREEGAN_MODEL_HPP
#define FREEGAN_MODEL_HPP

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "freegan/autodiff.hpp"
#include "freegan/common.hpp"
#include "freegan/config.hpp"
#include "freegan/dsp.hpp"
#include "freegan/prng.hpp"
#include "freegan/spectrogram.hpp"

// The vocoder network: an amplitude predictor (one block) fed by the
// log-amplitude prior, a phase predictor (four blocks with parallel
// real/imaginary heads), and a linear reconstruction head (inverse DFT +
// overlap-add) that turns the predicted spectrum into a waveform.

namespace freegan {

enum class Activation { Snake, Gelu, Identity };  // Identity exists for structural tests
enum class PriorMode { PseudoInverse, LearnableLinear };

constexpr int kAmpBlocks = 1;
constexpr int kPhaseBlocks = 4;

// Fixed affine conditioning of log-amplitude features at the stack inputs.
// Speech log-amplitudes live in roughly [log(1e-5), 3]; this maps them to
// order one so update sizes are comparable across layers.
constexpr real kLogAmpShift = 5.0;
constexpr real kLogAmpScale = 0.25;

struct ModelConfig {
    int width = 512;     // channel count C
    int expansion = 3;   // hidden multiplier h (pointwise expand C -> h*C)
    int kernel = 7;      // depthwise and in/out projection kernel
    Activation activation = Activation::Snake;
    PriorMode prior = PriorMode::PseudoInverse;
    bool phase_detach_amplitude = false;  // stop-gradient on the serial link
    bool phase_concat_prior = false;      // phase stack also sees the log prior
};

struct ModelParams {
    SpectralConfig scfg;
    ModelConfig mcfg;
    std::vector<ad::Param> params;
    std::unordered_map<std::string, int> index;

    ad::Param& add(const std::string& name, const ad::Shape& shape) {
        index.emplace(name, static_cast<int>(params.size()));
        params.emplace_back(name, shape);
        return params.back();
    }
    const ad::Param& get(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw InvalidInput("unknown parameter " + name);
        return params[it->second];
    }
    ad::Param& get(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw InvalidInput("unknown parameter " + name);
        return params[it->second];
    }
};

namespace detail {

inline void fill_trunc_normal(ad::Param& p, Rng& rng, real sigma = 0.02) {
    for (auto& v : p.value) v = rng.trunc_normal(sigma);
}

inline void add_block_params(ModelParams& mp, const std::string& prefix, int C, int hC, int k,
                             Rng& rng) {
    fill_trunc_normal(mp.add(prefix + ".dw.w", ad::Shape::mat(k, C)), rng);
    mp.add(prefix + ".dw.b", ad::Shape::vec(C));
    auto& lng = mp.add(prefix + ".ln.g", ad::Shape::vec(C));
    for (auto& v : lng.value) v = 1.0;
    mp.add(prefix + ".ln.b", ad::Shape::vec(C));
    fill_trunc_normal(mp.add(prefix + ".pw1.w", ad::Shape::mat(C, hC)), rng);
    mp.add(prefix + ".pw1.b", ad::Shape::vec(hC));
    mp.add(prefix + ".snake.loga", ad::Shape::vec(hC));  // alpha = exp(0) = 1 at init
    mp.add(prefix + ".grn.g", ad::Shape::vec(hC));       // zero: GRN starts as identity
    mp.add(prefix + ".grn.b", ad::Shape::vec(hC));
    fill_trunc_normal(mp.add(prefix + ".pw2.w", ad::Shape::mat(hC, C)), rng);
    mp.add(prefix + ".pw2.b", ad::Shape::vec(C));
}

}  // namespace detail

inline ModelParams init_model(const SpectralConfig& scfg, const ModelConfig& mcfg, uint64_t seed) {
    scfg.validate();
    if (mcfg.width < 1 || mcfg.expansion < 1 || mcfg.kernel < 1 || mcfg.kernel % 2 == 0)
        throw ConfigError("model: bad width/expansion/kernel");
    ModelParams mp;
    mp.scfg = scfg;
    mp.mcfg = mcfg;
    Rng rng(splitmix64(seed ^ 0xA5A5A5A5DEADBEEFULL));
    const int N = scfg.n_freq(), K = scfg.mel_bins;
    const int C = mcfg.width, hC = mcfg.width * mcfg.expansion, k = mcfg.kernel;

    if (mcfg.prior == PriorMode::LearnableLinear)
        detail::fill_trunc_normal(mp.add("prior.w", ad::Shape::mat(K, N)), rng);

    detail::fill_trunc_normal(mp.add("amp.in.w", ad::Shape::t3(k, N, C)), rng);
    mp.add("amp.in.b", ad::Shape::vec(C));
    for (int b = 0; b < kAmpBlocks; ++b)
        detail::add_block_params(mp, "amp.block" + std::to_string(b), C, hC, k, rng);
    detail::fill_trunc_normal(mp.add("amp.out.w", ad::Shape::t3(k, C, N)), rng);
    mp.add("amp.out.b", ad::Shape::vec(N));

    const int Nph = mcfg.phase_concat_prior ? 2 * N : N;
    detail::fill_trunc_normal(mp.add("phase.in.w", ad::Shape::t3(k, Nph, C)), rng);
    mp.add("phase.in.b", ad::Shape::vec(C));
    for (int b = 0; b < kPhaseBlocks; ++b)
        detail::add_block_params(mp, "phase.block" + std::to_string(b), C, hC, k, rng);
    detail::fill_trunc_normal(mp.add("phase.r.w", ad::Shape::mat(C, N)), rng);
    mp.add("phase.r.b", ad::Shape::vec(N));
    detail::fill_trunc_normal(mp.add("phase.i.w", ad::Shape::mat(C, N)), rng);
    mp.add("phase.i.b", ad::Shape::vec(N));
    return mp;
}

// ---------------------------------------------------------------------------
// reconstruction head constants
// ---------------------------------------------------------------------------

// DFT/inverse-DFT bases restricted to the analysis window length, plus the
// synthesis window. The head is linear, so gradients flow through matmuls.
struct SynthBasis {
    SpectralConfig cfg;
    std::vector<real> dft_re, dft_im;    // frame_len x n_freq (analysis)
    std::vector<real> idft_re, idft_im;  // n_freq x frame_len (synthesis)
    std::vector<real> window;
};

inline SynthBasis make_synth_basis(const SpectralConfig& cfg) {
    cfg.validate();
    SynthBasis b;
    b.cfg = cfg;
    const int L = cfg.frame_len, N = cfg.n_freq(), M = cfg.fft_size;
    b.dft_re.resize(static_cast<size_t>(L) * N);
    b.dft_im.resize(static_cast<size_t>(L) * N);
    b.idft_re.resize(static_cast<size_t>(N) * L);
    b.idft_im.resize(static_cast<size_t>(N) * L);
    for (int i = 0; i < L; ++i)
        for (int n = 0; n < N; ++n) {
            const real ang = kTwoPi * n * i / static_cast<real>(M);
            b.dft_re[static_cast<size_t>(i) * N + n] = std::cos(ang);
            b.dft_im[static_cast<size_t>(i) * N + n] = -std::sin(ang);
            const real a = (n == 0 || n == N - 1) ? 1.0 / M : 2.0 / M;
            b.idft_re[static_cast<size_t>(n) * L + i] = a * std::cos(ang);
            b.idft_im[static_cast<size_t>(n) * L + i] = -a * std::sin(ang);
        }
    b.window = hann_window(L);
    return b;
}

// Reciprocal window-sum over the untrimmed synthesis buffer; vanishing
// positions get 0 (they are re-windowed to zero wherever they are read).
inline std::vector<real> inv_window_sum(int frames, const SpectralConfig& cfg) {
    std::vector<real> den = window_sum(frames, cfg);
    for (auto& v : den) v = v > 1e-12 ? 1.0 / v : 0.0;
    return den;
}

// ---------------------------------------------------------------------------
// graph construction
// ---------------------------------------------------------------------------

struct GraphModel {
    const ModelParams* mp = nullptr;
    std::vector<ad::Var> leaves;  // parallel to mp->params

    ad::Var leaf(const std::string& name) const {
        return leaves[static_cast<size_t>(mp->index.at(name))];
    }
};

inline GraphModel mount(ad::Graph& g, const ModelParams& mp, bool requires_grad) {
    GraphModel gm;
    gm.mp = &mp;
    gm.leaves.reserve(mp.params.size());
    for (const auto& p : mp.params) gm.leaves.push_back(g.leaf(p.value, p.shape, requires_grad));
    return gm;
}

// x: (B,T,C) -> (B,T,C), the residual SNAKE-ConvNeXt v2 block.
inline ad::Var block_forward(ad::Var x, const GraphModel& gm, const std::string& prefix,
                             Activation act) {
    using namespace ad;
    if (x->shape.rank != 3) throw ShapeError("block_forward: need (B,T,C)");
    if (x->shape.last() != gm.leaf(prefix + ".dw.w")->shape.d[1])
        throw ShapeError("block_forward: channel mismatch");
    Var h = conv1d_depthwise(x, gm.leaf(prefix + ".dw.w"));
    h = add(h, gm.leaf(prefix + ".dw.b"));
    h = layer_norm(h, gm.leaf(prefix + ".ln.g"), gm.leaf(prefix + ".ln.b"));
    h = add(matmul(h, gm.leaf(prefix + ".pw1.w")), gm.leaf(prefix + ".pw1.b"));
    switch (act) {
        case Activation::Snake: h = snake(h, exp_op(gm.leaf(prefix + ".snake.loga"))); break;
        case Activation::Gelu: h = gelu(h); break;
        case Activation::Identity: break;
    }
    h = grn(h, gm.leaf(prefix + ".grn.g"), gm.leaf(prefix + ".grn.b"));
    h = add(matmul(h, gm.leaf(prefix + ".pw2.w")), gm.leaf(prefix + ".pw2.b"));
    return add(x, h);
}

// Predicted spectrum plus its synthesized signal, the shared surface between
// the model forward pass and the losses.
struct PredictionVars {
    ad::Var log_amp = nullptr;                     // (B,F,N)
    ad::Var phase = nullptr;                       // (B,F,N) in (-pi, pi]
    ad::Var spec_re = nullptr, spec_im = nullptr;  // predicted complex spectrum
    ad::Var ola_buffer = nullptr;                  // (B, (F-1)*shift+frame_len), normalized
    ad::Var wave = nullptr;                        // (B, F*shift)
};

// Linear reconstruction head: spectrum -> windowed inverse DFT -> overlap-add
// with window-sum normalization -> center trim.
inline PredictionVars reconstruct_graph(ad::Graph& g, ad::Var log_amp, ad::Var phase,
                                        const SynthBasis& basis, long F) {
    using namespace ad;
    const SpectralConfig& cfg = basis.cfg;
    const long N = cfg.n_freq(), L = cfg.frame_len, shift = cfg.frame_shift;
    PredictionVars pv;
    pv.log_amp = log_amp;
    pv.phase = phase;
    Var amp = exp_op(log_amp);
    pv.spec_re = mul(amp, cos_op(phase));
    pv.spec_im = mul(amp, sin_op(phase));
    Var frames = add(matmul(pv.spec_re, g.constant(basis.idft_re, Shape::mat(N, L))),
                     matmul(pv.spec_im, g.constant(basis.idft_im, Shape::mat(N, L))));
    Var windowed = cmul_lastdim(frames, basis.window);
    Var buf = overlap_add(windowed, shift);
    pv.ola_buffer = cmul_lastdim(buf, inv_window_sum(static_cast<int>(F), cfg));
    pv.wave = slice_lastdim(pv.ola_buffer, cfg.pad(), F * shift);
    return pv;
}

struct ForwardGraph {
    GraphModel gm;
    ad::Var log_prior = nullptr;  // (B,F,N)
    ad::Var log_amp = nullptr;    // (B,F,N)
    ad::Var head_r = nullptr, head_i = nullptr;
    ad::Var phase = nullptr;                       // (B,F,N) in (-pi, pi]
    ad::Var spec_re = nullptr, spec_im = nullptr;  // predicted complex spectrum
    ad::Var ola_buffer = nullptr;                  // (B, (F-1)*shift+frame_len), normalized
    ad::Var wave = nullptr;                        // (B, F*shift)

    PredictionVars predictions() const {
        return {log_amp, phase, spec_re, spec_im, ola_buffer, wave};
    }
};

// Full forward pass over a (B,F,K) mel batch. In PseudoInverse mode the prior
// is a constant of the graph; in LearnableLinear mode it is differentiable.
inline ForwardGraph build_forward(ad::Graph& g, const ModelParams& mp, const MelFilter& filt,
                                  const SynthBasis& basis, const std::vector<real>& mel, long B,
                                  long F, bool requires_grad) {
    using namespace ad;
    const SpectralConfig& cfg = mp.scfg;
    const long N = cfg.n_freq(), K = cfg.mel_bins;
    if (static_cast<long>(mel.size()) != B * F * K) throw ShapeError("build_forward: mel size");

    ForwardGraph fg;
    fg.gm = mount(g, mp, requires_grad);

    if (mp.mcfg.prior == PriorMode::LearnableLinear) {
        Var x = g.constant(mel, Shape::t3(B, F, K));
        Var p = clamp_min(abs_op(matmul(x, fg.gm.leaf("prior.w"))), cfg.amp_floor);
        fg.log_prior = log_op(p);
    } else {
        // constant w.r.t. parameters: compute outside the graph
        std::vector<real> prior(static_cast<size_t>(B) * F * N);
        using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        Eigen::Map<Mat>(prior.data(), B * F, N) =
            Eigen::Map<const Mat>(mel.data(), B * F, K) *
            Eigen::Map<const Mat>(filt.pseudo_inverse.data(), K, N);
        for (auto& v : prior) v = std::log(std::max(std::abs(v), cfg.amp_floor));
        fg.log_prior = g.constant(prior, Shape::t3(B, F, N));
    }

    // amplitude stack: one block predicting the correction to the prior,
    // so the lightweight predictor starts from the prior instead of zero
    Var cond = mul_scalar(add_scalar(fg.log_prior, kLogAmpShift), kLogAmpScale);
    Var h = add(conv1d(cond, fg.gm.leaf("amp.in.w")), fg.gm.leaf("amp.in.b"));
    for (int b = 0; b < kAmpBlocks; ++b)
        h = block_forward(h, fg.gm, "amp.block" + std::to_string(b), mp.mcfg.activation);
    fg.log_amp = add(add(conv1d(h, fg.gm.leaf("amp.out.w")), fg.gm.leaf("amp.out.b")),
                     fg.log_prior);

    // phase stack: four blocks, parallel heads, two-argument arctangent
    Var pin = mp.mcfg.phase_detach_amplitude ? detach(fg.log_amp) : fg.log_amp;
    pin = mul_scalar(add_scalar(pin, kLogAmpShift), kLogAmpScale);
    if (mp.mcfg.phase_concat_prior) pin = concat_lastdim(pin, cond);
    Var ph = add(conv1d(pin, fg.gm.leaf("phase.in.w")), fg.gm.leaf("phase.in.b"));
    for (int b = 0; b < kPhaseBlocks; ++b)
        ph = block_forward(ph, fg.gm, "phase.block" + std::to_string(b), mp.mcfg.activation);
    fg.head_r = add(matmul(ph, fg.gm.leaf("phase.r.w")), fg.gm.leaf("phase.r.b"));
    fg.head_i = add(matmul(ph, fg.gm.leaf("phase.i.w")), fg.gm.leaf("phase.i.b"));
    fg.phase = atan2_op(fg.head_i, fg.head_r);

    const PredictionVars pv = reconstruct_graph(g, fg.log_amp, fg.phase, basis, F);
    fg.spec_re = pv.spec_re;
    fg.spec_im = pv.spec_im;
    fg.ola_buffer = pv.ola_buffer;
    fg.wave = pv.wave;
    return fg;
}

// Re-analysis of the synthesized buffer on the original frame grid. Feeds the
// consistency part of the STFT loss and the frame-aligned mel loss.
inline std::pair<ad::Var, ad::Var> reanalyze(const ForwardGraph& fg, const SynthBasis& basis,
                                             long F) {
    using namespace ad;
    const SpectralConfig& cfg = basis.cfg;
    const long N = cfg.n_freq(), L = cfg.frame_len;
    Var f2 = frame_grid(fg.ola_buffer, F, L, cfg.frame_shift);
    Var w2 = cmul_lastdim(f2, basis.window);
    Var re = matmul(w2, fg.wave->owner->constant(basis.dft_re, Shape::mat(L, N)));
    Var im = matmul(w2, fg.wave->owner->constant(basis.dft_im, Shape::mat(L, N)));
    return {re, im};
}

// ---------------------------------------------------------------------------
// inference surface (single spectrogram in, single spectrogram out)
// ---------------------------------------------------------------------------

inline Spectrogram predict_amplitude(const Spectrogram& log_prior, const ModelParams& mp) {
    using namespace ad;
    if (log_prior.bins != mp.scfg.n_freq()) throw ShapeError("predict_amplitude: bin mismatch");
    Graph g;
    GraphModel gm = mount(g, mp, false);
    Var x = g.constant(log_prior.data, Shape::t3(1, log_prior.frames, log_prior.bins));
    Var cond = mul_scalar(add_scalar(x, kLogAmpShift), kLogAmpScale);
    Var h = add(conv1d(cond, gm.leaf("amp.in.w")), gm.leaf("amp.in.b"));
    for (int b = 0; b < kAmpBlocks; ++b)
        h = block_forward(h, gm, "amp.block" + std::to_string(b), mp.mcfg.activation);
    Var out = add(add(conv1d(h, gm.leaf("amp.out.w")), gm.leaf("amp.out.b")), x);
    Spectrogram res(log_prior.frames, log_prior.bins, SpecDomain::LogAmplitude, mp.scfg);
    res.data = out->v;
    return res;
}

// Phase from the parallel heads; exposed separately as the head-override hook.
inline Spectrogram phase_from_heads(const Spectrogram& head_r, const Spectrogram& head_i) {
    if (head_r.frames != head_i.frames || head_r.bins != head_i.bins)
        throw ShapeError("phase_from_heads: shape mismatch");
    Spectrogram p(head_r.frames, head_r.bins, SpecDomain::Phase, head_r.cfg);
    for (size_t i = 0; i < p.data.size(); ++i) {
        real v = std::atan2(head_i.data[i], head_r.data[i]);
        if (v <= -kPi) v = kPi;
        p.data[i] = v;
    }
    return p;
}

inline Spectrogram predict_phase(const Spectrogram& log_amp, const ModelParams& mp) {
    using namespace ad;
    if (mp.mcfg.phase_concat_prior)
        throw InvalidInput("predict_phase: model was built with phase_concat_prior; use forward()");
    if (log_amp.bins != mp.scfg.n_freq()) throw ShapeError("predict_phase: bin mismatch");
    Graph g;
    GraphModel gm = mount(g, mp, false);
    Var x = g.constant(log_amp.data, Shape::t3(1, log_amp.frames, log_amp.bins));
    Var cond = mul_scalar(add_scalar(x, kLogAmpShift), kLogAmpScale);
    Var h = add(conv1d(cond, gm.leaf("phase.in.w")), gm.leaf("phase.in.b"));
    for (int b = 0; b < kPhaseBlocks; ++b)
        h = block_forward(h, gm, "phase.block" + std::to_string(b), mp.mcfg.activation);
    Var r = add(matmul(h, gm.leaf("phase.r.w")), gm.leaf("phase.r.b"));
    Var i = add(matmul(h, gm.leaf("phase.i.w")), gm.leaf("phase.i.b"));
    Var p = atan2_op(i, r);
    Spectrogram res(log_amp.frames, log_amp.bins, SpecDomain::Phase, mp.scfg);
    res.data = p->v;
    return res;
}

struct ForwardResult {
    Spectrogram log_amp;
    Spectrogram phase;
    std::vector<real> wave;
};

// mel (F,K) -> (log-amplitude, phase, waveform of F*frame_shift samples)
inline ForwardResult forward(const Spectrogram& mel, const ModelParams& mp, const MelFilter& filt,
                             const SynthBasis& basis) {
    if (mel.domain != SpecDomain::Mel) throw InvalidInput("forward: input must be Mel");
    if (mel.bins != mp.scfg.mel_bins) throw ShapeError("forward: mel bin mismatch");
    ad::Graph g;
    ForwardGraph fg = build_forward(g, mp, filt, basis, mel.data, 1, mel.frames, false);
    ForwardResult r;
    r.log_amp = Spectrogram(mel.frames, mp.scfg.n_freq(), SpecDomain::LogAmplitude, mp.scfg);
    r.log_amp.data = fg.log_amp->v;
    r.phase = Spectrogram(mel.frames, mp.scfg.n_freq(), SpecDomain::Phase, mp.scfg);
    r.phase.data = fg.phase->v;
    r.wave = fg.wave->v;
    return r;
}

// Teacher-forced reconstruction: run natural log-amplitude/phase through the
// linear head only.
inline std::vector<real> reconstruct_wave(const Spectrogram& log_amp, const Spectrogram& phase,
                                          const SynthBasis& basis) {
    using namespace ad;
    if (log_amp.frames != phase.frames || log_amp.bins != phase.bins)
        throw ShapeError("reconstruct_wave: shape mismatch");
    const long F = log_amp.frames, N = basis.cfg.n_freq();
    Graph g;
    Var la = g.constant(log_amp.data, Shape::t3(1, F, N));
    Var ph = g.constant(phase.data, Shape::t3(1, F, N));
    return reconstruct_graph(g, la, ph, basis, F).wave->v;
}

// ---------------------------------------------------------------------------
// complexity accounting
// ---------------------------------------------------------------------------

inline long long count_params(const ModelParams& mp) {
    long long total = 0;
    for (const auto& p : mp.params) total += p.shape.numel();
    return total;
}

// FLOPs to generate `duration_s` seconds of speech. One fused multiply-add
// counts as one floating-point operation, the convention of common model
// complexity profilers; normalization/activation element ops are excluded.
inline long long count_flops(const ModelParams& mp, const SpectralConfig& cfg, real duration_s) {
    const long long N = cfg.n_freq(), K = cfg.mel_bins, L = cfg.frame_len;
    const long long C = mp.mcfg.width, hC = static_cast<long long>(C) * mp.mcfg.expansion;
    const long long k = mp.mcfg.kernel;
    const long long frames =
        static_cast<long long>(std::ceil(duration_s * cfg.sample_rate_hz / cfg.frame_shift));

    long long per_frame = K * N;  // prior projection (fixed or learnable)
    per_frame += k * N * C;       // amplitude in-projection
    const long long block = k * C + C * hC + hC * C;
    per_frame += kAmpBlocks * block;
    per_frame += k * C * N;  // amplitude out-projection
    per_frame += k * (mp.mcfg.phase_concat_prior ? 2 * N : N) * C;  // phase in-projection
    per_frame += kPhaseBlocks * block;
    per_frame += 2 * C * N;  // parallel heads
    per_frame += 2 * N * L;  // inverse DFT of the reconstruction head
    return per_frame * frames;
}

}  // namespace freegan

#endif  // FREEGAN_MODEL_HPP
