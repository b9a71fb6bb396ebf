#ifndef FREEGAN_LOSSES_HPP
#define FREEGAN_LOSSES_HPP

#include <cmath>
#include <vector>

#include "freegan/autodiff.hpp"
#include "freegan/common.hpp"
#include "freegan/dsp.hpp"
#include "freegan/model.hpp"
#include "freegan/spectrogram.hpp"

// Training criteria: frequency-weighted anti-wrapping phase losses (IP, GD,
// IAF), log-amplitude MSE, reconstructed-STFT loss (real/imag MSE plus a
// consistency term on the predicted spectrum), mel L1, and the weighted
// total. Plain Spectrogram overloads serve evaluation and tests; the graph
// builders serve training.

namespace freegan {

// Geometric per-bin weights: w[n] = rho^(n/(N-1)), so w[0] = 1, w[N-1] = rho.
struct FwawWeights {
    real rho = 1.0;
    std::vector<real> w;
};

inline FwawWeights fwaw_weights(int n_bins, real rho) {
    if (n_bins < 2) throw InvalidInput("fwaw_weights: need at least 2 bins");
    if (!(rho > 0.0)) throw DomainError("fwaw_weights: rho must be positive");
    FwawWeights wt;
    wt.rho = rho;
    wt.w.resize(static_cast<size_t>(n_bins));
    for (int n = 0; n < n_bins; ++n)
        wt.w[n] = std::pow(rho, static_cast<real>(n) / static_cast<real>(n_bins - 1));
    return wt;
}

struct LossWeights {
    real lambda_a = 0.45;
    real lambda_s = 0.2;
    real lambda_mel = 0.45;
};

struct PhaseLossTerms {
    real ip = 0, gd = 0, iaf = 0;
};

struct LossReport {
    real ip = 0, gd = 0, iaf = 0;
    real amplitude = 0, stft = 0, mel = 0;
    real total = 0;
};

// ---------------------------------------------------------------------------
// plain (differentiation-free) implementations
// ---------------------------------------------------------------------------

namespace detail {

inline real weighted_aw_mean(const std::vector<real>& pred, const std::vector<real>& target,
                             const std::vector<real>& w, long rows, long cols) {
    real acc = 0.0;
    for (long f = 0; f < rows; ++f)
        for (long n = 0; n < cols; ++n)
            acc += anti_wrap(pred[f * cols + n] - target[f * cols + n]) * w[n];
    return acc / static_cast<real>(rows * cols);
}

}  // namespace detail

inline PhaseLossTerms fwaw_phase_loss(const Spectrogram& pred, const Spectrogram& target,
                                      const FwawWeights& wt) {
    if (pred.frames != target.frames || pred.bins != target.bins)
        throw ShapeError("fwaw_phase_loss: shape mismatch");
    if (pred.domain != SpecDomain::Phase || target.domain != SpecDomain::Phase)
        throw InvalidInput("fwaw_phase_loss: inputs must be Phase");
    if (static_cast<long>(wt.w.size()) != pred.bins)
        throw ShapeError("fwaw_phase_loss: weight length mismatch");
    const long F = pred.frames, N = pred.bins;
    if (F < 2) throw InvalidInput("fwaw_phase_loss: need >= 2 frames for IAF");
    PhaseLossTerms t;
    t.ip = detail::weighted_aw_mean(pred.data, target.data, wt.w, F, N);
    t.gd = detail::weighted_aw_mean(phase_differential(pred, PhaseAxis::Frequency),
                                    phase_differential(target, PhaseAxis::Frequency), wt.w, F, N);
    t.iaf = detail::weighted_aw_mean(phase_differential(pred, PhaseAxis::Time),
                                     phase_differential(target, PhaseAxis::Time), wt.w, F, N);
    return t;
}

// mean squared error over log-amplitude entries
inline real amplitude_loss(const Spectrogram& pred_log, const Spectrogram& target_log) {
    if (pred_log.frames != target_log.frames || pred_log.bins != target_log.bins)
        throw ShapeError("amplitude_loss: shape mismatch");
    real acc = 0.0;
    for (size_t i = 0; i < pred_log.data.size(); ++i) {
        const real d = pred_log.data[i] - target_log.data[i];
        acc += d * d;
    }
    return acc / static_cast<real>(pred_log.data.size());
}

struct StftLossTerms {
    real reim = 0;         // |S_hat - S|^2 averaged over entries
    real consistency = 0;  // |S_hat - STFT(iSTFT(S_hat))|^2 averaged
    real total() const { return reim + consistency; }
};

namespace detail {

// Re-analysis of an untrimmed synthesis buffer on the original frame grid.
inline void reanalyze_buffer(const std::vector<real>& buf, int frames, const SpectralConfig& cfg,
                             std::vector<real>& re, std::vector<real>& im) {
    const int N = cfg.n_freq(), L = cfg.frame_len;
    const std::vector<real> win = hann_window(L);
    re.resize(static_cast<size_t>(frames) * N);
    im.resize(static_cast<size_t>(frames) * N);
    std::vector<real> fr(static_cast<size_t>(L));
    for (int s = 0; s < frames; ++s) {
        for (int i = 0; i < L; ++i) fr[i] = buf[static_cast<size_t>(s) * cfg.frame_shift + i] * win[i];
        const auto spec = rfft(fr, cfg.fft_size);
        for (int n = 0; n < N; ++n) {
            re[static_cast<size_t>(s) * N + n] = spec[n].real();
            im[static_cast<size_t>(s) * N + n] = spec[n].imag();
        }
    }
}

}  // namespace detail

inline StftLossTerms stft_loss_terms(const Spectrogram& pred_log, const Spectrogram& pred_phase,
                                     const Spectrogram& target_log, const Spectrogram& target_phase,
                                     const SpectralConfig& cfg) {
    if (pred_log.frames != target_log.frames || pred_log.bins != target_log.bins ||
        pred_phase.frames != pred_log.frames || pred_phase.bins != pred_log.bins ||
        target_phase.frames != target_log.frames || target_phase.bins != target_log.bins)
        throw ShapeError("stft_loss: shape mismatch");
    const long F = pred_log.frames, N = pred_log.bins;
    StftLossTerms t;
    Spectrogram pred_amp(pred_log.frames, pred_log.bins, SpecDomain::Amplitude, cfg);
    for (size_t i = 0; i < pred_log.data.size(); ++i) {
        const real ra = std::exp(pred_log.data[i]);
        const real ta = std::exp(target_log.data[i]);
        pred_amp.data[i] = ra;
        const real pr = ra * std::cos(pred_phase.data[i]);
        const real pi = ra * std::sin(pred_phase.data[i]);
        const real tr = ta * std::cos(target_phase.data[i]);
        const real ti = ta * std::sin(target_phase.data[i]);
        t.reim += (pr - tr) * (pr - tr) + (pi - ti) * (pi - ti);
    }
    t.reim /= static_cast<real>(F * N);

    Spectrogram pp = pred_phase;  // istft checks the Phase domain tag
    pp.domain = SpecDomain::Phase;
    const std::vector<real> buf = freegan::detail::istft_buffer(pred_amp, pp, cfg);
    std::vector<real> re2, im2;
    detail::reanalyze_buffer(buf, static_cast<int>(F), cfg, re2, im2);
    for (long i = 0; i < F * N; ++i) {
        const real pr = pred_amp.data[i] * std::cos(pred_phase.data[i]);
        const real pi = pred_amp.data[i] * std::sin(pred_phase.data[i]);
        const real dr = pr - re2[i], di = pi - im2[i];
        t.consistency += dr * dr + di * di;
    }
    t.consistency /= static_cast<real>(F * N);
    return t;
}

inline real stft_loss(const Spectrogram& pred_log, const Spectrogram& pred_phase,
                      const Spectrogram& target_log, const Spectrogram& target_phase,
                      const SpectralConfig& cfg) {
    return stft_loss_terms(pred_log, pred_phase, target_log, target_phase, cfg).total();
}

// Mean absolute error between log mel of the synthesized waveform and the
// log of the target mel. Tolerates a one-frame count difference (the
// synthesized length is F*shift, whose own analysis yields F+1 frames).
inline real mel_loss(const std::vector<real>& wave_hat, const Spectrogram& x,
                     const SpectralConfig& cfg, const MelFilter& filt) {
    if (x.domain != SpecDomain::Mel) throw InvalidInput("mel_loss: target must be Mel");
    const Spectrogram mh = mel_spectrogram(wave_hat, cfg, filt);
    if (std::abs(mh.frames - x.frames) > 1)
        throw ShapeError("mel_loss: frame counts differ by more than one (" +
                         std::to_string(mh.frames) + " vs " + std::to_string(x.frames) + ")");
    const long F = std::min(mh.frames, x.frames), K = x.bins;
    real acc = 0.0;
    for (long f = 0; f < F; ++f)
        for (long k = 0; k < K; ++k)
            acc += std::abs(std::log(std::max(mh.at(f, k), cfg.amp_floor)) -
                            std::log(std::max(x.at(f, k), cfg.amp_floor)));
    return acc / static_cast<real>(F * K);
}

inline real mel_loss(const std::vector<real>& wave_hat, const Spectrogram& x,
                     const SpectralConfig& cfg) {
    return mel_loss(wave_hat, x, cfg, mel_filterbank(cfg));
}

inline LossReport total_loss(const PhaseLossTerms& phase, real amplitude, real stft, real mel,
                             const LossWeights& lw) {
    for (real v : {phase.ip, phase.gd, phase.iaf, amplitude, stft, mel})
        if (!std::isfinite(v)) throw NumericalError("total_loss: non-finite loss term");
    LossReport r;
    r.ip = phase.ip;
    r.gd = phase.gd;
    r.iaf = phase.iaf;
    r.amplitude = amplitude;
    r.stft = stft;
    r.mel = mel;
    r.total = phase.ip + phase.gd + phase.iaf + lw.lambda_a * amplitude + lw.lambda_s * stft +
              lw.lambda_mel * mel;
    return r;
}

// ---------------------------------------------------------------------------
// graph builders (training path)
// ---------------------------------------------------------------------------

enum class PhaseTheta { None, Frequency, Time };

// One FWAW term: mean over entries of f_AW(theta(pred) - theta(target)) * w[n].
inline ad::Var fwaw_term_graph(ad::Var pred, ad::Var target, const std::vector<real>& w,
                               PhaseTheta theta) {
    using namespace ad;
    Var dp = pred, dt = target;
    if (theta == PhaseTheta::Frequency) {
        dp = phase_diff(dp, true);
        dt = phase_diff(dt, true);
    } else if (theta == PhaseTheta::Time) {
        dp = phase_diff(dp, false);
        dt = phase_diff(dt, false);
    }
    return mean(cmul_lastdim(anti_wrap_op(sub(dp, dt)), w));
}

inline ad::Var mse_graph(ad::Var pred, ad::Var target) {
    ad::Var d = ad::sub(pred, target);
    return ad::mean(ad::mul(d, d));
}

struct LossGraph {
    ad::Var ip = nullptr, gd = nullptr, iaf = nullptr;
    ad::Var amplitude = nullptr, stft = nullptr, mel = nullptr;
    ad::Var total = nullptr;

    LossReport values() const {
        LossReport r;
        r.ip = ip->v[0];
        r.gd = gd->v[0];
        r.iaf = iaf->v[0];
        r.amplitude = amplitude->v[0];
        r.stft = stft->v[0];
        r.mel = mel->v[0];
        r.total = total->v[0];
        return r;
    }
};

// Natural targets for one batch, row-major (B,F,*).
struct Targets {
    std::vector<real> mel;      // B*F*K, linear, floored
    std::vector<real> log_amp;  // B*F*N
    std::vector<real> phase;    // B*F*N
};

// All training losses as a graph over the prediction variables. The STFT
// consistency term and the mel loss share one re-analysis of the synthesized
// buffer on the original frame grid, which keeps the mel loss frame-aligned
// with the target without an extra padding pass.
inline LossGraph build_losses(ad::Graph& g, const PredictionVars& pv, const SynthBasis& basis,
                              const MelFilter& filt, const Targets& tg, long B, long F,
                              const FwawWeights& wt, const LossWeights& lw) {
    using namespace ad;
    const SpectralConfig& cfg = basis.cfg;
    const long N = cfg.n_freq(), K = cfg.mel_bins, L = cfg.frame_len;
    const Shape sfn = Shape::t3(B, F, N);
    Var target_phase = g.constant(tg.phase, sfn);
    Var target_log = g.constant(tg.log_amp, sfn);

    LossGraph lg;
    lg.ip = fwaw_term_graph(pv.phase, target_phase, wt.w, PhaseTheta::None);
    lg.gd = fwaw_term_graph(pv.phase, target_phase, wt.w, PhaseTheta::Frequency);
    lg.iaf = fwaw_term_graph(pv.phase, target_phase, wt.w, PhaseTheta::Time);
    lg.amplitude = mse_graph(pv.log_amp, target_log);

    // target complex spectrum (constant)
    std::vector<real> tre(tg.log_amp.size()), tim(tg.log_amp.size());
    for (size_t i = 0; i < tre.size(); ++i) {
        const real a = std::exp(tg.log_amp[i]);
        tre[i] = a * std::cos(tg.phase[i]);
        tim[i] = a * std::sin(tg.phase[i]);
    }
    Var dre = sub(pv.spec_re, g.constant(tre, sfn));
    Var dim = sub(pv.spec_im, g.constant(tim, sfn));
    Var reim = mean(add(mul(dre, dre), mul(dim, dim)));

    // re-analysis on the original grid
    Var f2 = frame_grid(pv.ola_buffer, F, L, cfg.frame_shift);
    Var w2 = cmul_lastdim(f2, basis.window);
    Var re2 = matmul(w2, g.constant(basis.dft_re, Shape::mat(L, N)));
    Var im2 = matmul(w2, g.constant(basis.dft_im, Shape::mat(L, N)));
    Var dcr = sub(pv.spec_re, re2);
    Var dci = sub(pv.spec_im, im2);
    Var consistency = mean(add(mul(dcr, dcr), mul(dci, dci)));
    lg.stft = add(reim, consistency);

    // frame-aligned mel L1 on the re-analyzed amplitude
    Var amp2 = sqrt_op(add(mul(re2, re2), mul(im2, im2)));
    Var mel2 = clamp_min(matmul(amp2, g.constant(filt.forward, Shape::mat(N, K))), cfg.amp_floor);
    std::vector<real> log_x(tg.mel.size());
    for (size_t i = 0; i < log_x.size(); ++i)
        log_x[i] = std::log(std::max(tg.mel[i], cfg.amp_floor));
    lg.mel = mean(abs_op(sub(log_op(mel2), g.constant(log_x, Shape::t3(B, F, K)))));

    Var weighted = add(add(mul_scalar(lg.amplitude, lw.lambda_a), mul_scalar(lg.stft, lw.lambda_s)),
                       mul_scalar(lg.mel, lw.lambda_mel));
    lg.total = add(add(add(lg.ip, lg.gd), lg.iaf), weighted);
    return lg;
}

}  // namespace freegan

#endif  // FREEGAN_LOSSES_HPP
