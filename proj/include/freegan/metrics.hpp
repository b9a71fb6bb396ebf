#ifndef FREEGAN_METRICS_HPP
#define FREEGAN_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "freegan/common.hpp"
#include "freegan/config.hpp"
#include "freegan/dsp.hpp"

// Objective evaluation: SNR, mel-cepstrum distortion, autocorrelation F0
// tracking, F0-RMSE in cents and V/UV error, plus the tab-separated report.
// All functions here are pure; batch evaluation may fan out across threads.

namespace freegan {

constexpr real kSnrCapDb = 100.0;

namespace detail {

// Lengths may differ by at most `slack` samples (one analysis window);
// both signals are then trimmed to the shorter one.
inline size_t common_length(size_t a, size_t b, size_t slack, const char* who) {
    const size_t lo = std::min(a, b), hi = std::max(a, b);
    if (hi - lo > slack)
        throw InvalidInput(std::string(who) + ": length mismatch beyond one frame (" +
                           std::to_string(a) + " vs " + std::to_string(b) + ")");
    return lo;
}

}  // namespace detail

// 10*log10(|ref|^2 / |ref-syn|^2), capped at 100 dB. Not symmetric.
inline real snr(const std::vector<real>& ref, const std::vector<real>& syn) {
    const size_t n = detail::common_length(ref.size(), syn.size(), 320, "snr");
    if (n == 0) throw InvalidInput("snr: empty input");
    real sig = 0.0, err = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sig += ref[i] * ref[i];
        const real d = ref[i] - syn[i];
        err += d * d;
    }
    if (sig <= 0.0) throw InvalidInput("snr: zero-energy reference");
    if (err == 0.0) return kSnrCapDb;
    return std::min(10.0 * std::log10(sig / err), kSnrCapDb);
}

// ---------------------------------------------------------------------------
// mel-cepstrum distortion
// ---------------------------------------------------------------------------

// Per-frame mel cepstra: orthonormal DCT-II of the natural-log mel
// spectrogram, coefficients 1..order (c0 excluded). Returns frames x order.
inline std::vector<real> mel_cepstra(const std::vector<real>& wave, const SpectralConfig& cfg,
                                     const MelFilter& filt, int order = 13) {
    const Spectrogram mel = mel_spectrogram(wave, cfg, filt);
    const int F = mel.frames, K = mel.bins;
    if (order >= K) throw InvalidInput("mel_cepstra: order must be below mel_bins");
    std::vector<real> out(static_cast<size_t>(F) * order);
    const real scale = std::sqrt(2.0 / K);
    for (int f = 0; f < F; ++f)
        for (int d = 1; d <= order; ++d) {
            real acc = 0.0;
            for (int k = 0; k < K; ++k)
                acc += std::log(mel.at(f, k)) * std::cos(kPi * d * (k + 0.5) / K);
            out[static_cast<size_t>(f) * order + d - 1] = scale * acc;
        }
    return out;
}

// (10*sqrt(2)/ln 10) * mean over frames of the cepstral Euclidean distance.
inline real mcd_from_cepstra(const std::vector<real>& ref, const std::vector<real>& syn,
                             long frames, int order) {
    if (ref.size() != syn.size() || ref.size() != static_cast<size_t>(frames) * order)
        throw ShapeError("mcd_from_cepstra: shape mismatch");
    real acc = 0.0;
    for (long f = 0; f < frames; ++f) {
        real d2 = 0.0;
        for (int d = 0; d < order; ++d) {
            const real dd = ref[f * order + d] - syn[f * order + d];
            d2 += dd * dd;
        }
        acc += std::sqrt(d2);
    }
    const real k = 10.0 * std::sqrt(2.0) / std::log(10.0);
    return k * acc / static_cast<real>(frames);
}

inline real mcd(const std::vector<real>& ref, const std::vector<real>& syn,
                const SpectralConfig& cfg, const MelFilter& filt) {
    const size_t n = detail::common_length(ref.size(), syn.size(), 320, "mcd");
    if (n == 0) throw InvalidInput("mcd: empty input");
    const std::vector<real> a(ref.begin(), ref.begin() + n);
    const std::vector<real> b(syn.begin(), syn.begin() + n);
    constexpr int order = 13;
    const std::vector<real> ca = mel_cepstra(a, cfg, filt, order);
    const std::vector<real> cb = mel_cepstra(b, cfg, filt, order);
    return mcd_from_cepstra(ca, cb, static_cast<long>(ca.size()) / order, order);
}

inline real mcd(const std::vector<real>& ref, const std::vector<real>& syn,
                const SpectralConfig& cfg) {
    return mcd(ref, syn, cfg, mel_filterbank(cfg));
}

// ---------------------------------------------------------------------------
// F0 tracking
// ---------------------------------------------------------------------------

struct PitchTrack {
    std::vector<real> f0_hz;        // 0 for unvoiced frames
    std::vector<uint8_t> voiced;

    size_t frames() const { return f0_hz.size(); }
};

constexpr real kF0Min = 50.0, kF0Max = 600.0;
constexpr real kVoicingClarity = 0.3;
constexpr real kSilenceRms = 1e-4;

// Normalized-autocorrelation pitch per frame (40 ms window centered on the
// STFT frame grid), parabolic peak interpolation, clarity- and energy-gated
// voicing. Dependency-free and accurate on synthetic tones.
inline PitchTrack extract_f0(const std::vector<real>& wave, const SpectralConfig& cfg) {
    const long sr = cfg.sample_rate_hz;
    const long win = static_cast<long>(std::lround(0.04 * sr));
    if (static_cast<long>(wave.size()) < win)
        throw InvalidInput("extract_f0: input shorter than the 40 ms analysis window");
    const long lag_min = std::max<long>(2, static_cast<long>(std::floor(sr / kF0Max)));
    const long lag_max = static_cast<long>(std::ceil(sr / kF0Min));
    const long span = win - lag_max;  // correlation support
    const int frames = cfg.frame_count(static_cast<long>(wave.size()));

    PitchTrack track;
    track.f0_hz.assign(frames, 0.0);
    track.voiced.assign(frames, 0);

    std::vector<real> x(static_cast<size_t>(win));
    std::vector<real> r(static_cast<size_t>(lag_max) + 1, 0.0);
    for (int s = 0; s < frames; ++s) {
        const long center = static_cast<long>(s) * cfg.frame_shift;
        const long base = center - win / 2;
        for (long i = 0; i < win; ++i) {
            const long idx = base + i;
            x[i] = (idx >= 0 && idx < static_cast<long>(wave.size())) ? wave[idx] : 0.0;
        }
        real rms = 0.0;
        for (long i = 0; i < win; ++i) rms += x[i] * x[i];
        rms = std::sqrt(rms / static_cast<real>(win));
        if (rms < kSilenceRms) continue;

        real e0 = 0.0;
        for (long i = 0; i < span; ++i) e0 += x[i] * x[i];
        real best = 0.0;
        for (long tau = lag_min; tau <= lag_max; ++tau) {
            real num = 0.0, e1 = 0.0;
            for (long i = 0; i < span; ++i) {
                num += x[i] * x[i + tau];
                e1 += x[i + tau] * x[i + tau];
            }
            const real den = std::sqrt(e0 * e1);
            r[tau] = den > 1e-12 ? num / den : 0.0;
            best = std::max(best, r[tau]);
        }
        if (best <= kVoicingClarity) continue;

        // first local maximum close to the global one, to dodge octave drops
        long tau0 = -1;
        for (long tau = lag_min + 1; tau < lag_max; ++tau) {
            if (r[tau] >= r[tau - 1] && r[tau] >= r[tau + 1] && r[tau] >= 0.9 * best) {
                tau0 = tau;
                break;
            }
        }
        if (tau0 < 0) continue;
        // parabolic interpolation around the peak
        const real ym = r[tau0 - 1], y0 = r[tau0], yp = r[tau0 + 1];
        const real denom = ym - 2.0 * y0 + yp;
        real delta = 0.0;
        if (std::abs(denom) > 1e-12) delta = 0.5 * (ym - yp) / denom;
        delta = std::clamp(delta, -0.5, 0.5);
        const real f0 = sr / (static_cast<real>(tau0) + delta);
        if (f0 < kF0Min || f0 > kF0Max) continue;
        track.f0_hz[s] = f0;
        track.voiced[s] = 1;
    }
    return track;
}

struct F0Metrics {
    real f0_rmse_cents = 0.0;  // NaN when no mutually voiced frames exist
    real vuv_error_pct = 0.0;
};

// RMSE of 1200*log2(f_syn/f_ref) over mutually voiced frames, and the
// percentage of frames whose voicing flags disagree.
inline F0Metrics f0_metrics(const PitchTrack& ref, const PitchTrack& syn) {
    if (ref.frames() != syn.frames()) throw InvalidInput("f0_metrics: frame count mismatch");
    if (ref.frames() == 0) throw InvalidInput("f0_metrics: empty tracks");
    F0Metrics m;
    long disagree = 0, both = 0;
    real acc = 0.0;
    for (size_t i = 0; i < ref.frames(); ++i) {
        if (ref.voiced[i] != syn.voiced[i]) ++disagree;
        if (ref.voiced[i] && syn.voiced[i]) {
            const real cents = 1200.0 * std::log2(syn.f0_hz[i] / ref.f0_hz[i]);
            acc += cents * cents;
            ++both;
        }
    }
    m.vuv_error_pct = 100.0 * static_cast<real>(disagree) / static_cast<real>(ref.frames());
    m.f0_rmse_cents = both > 0 ? std::sqrt(acc / static_cast<real>(both))
                               : std::numeric_limits<real>::quiet_NaN();
    return m;
}

// ---------------------------------------------------------------------------
// evaluation report
// ---------------------------------------------------------------------------

struct EvalRow {
    std::string name;
    real snr_db = 0, mcd_db = 0, f0_rmse_cents = 0, vuv_err_pct = 0;
};

// Tab-separated report; one row per pair, a MEAN row, unmatched files in the
// footer. The utmos column stays blank (external predictor, out of scope).
inline void write_eval_report(const std::string& path, const std::vector<EvalRow>& rows,
                              const std::vector<std::string>& unmatched) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InvalidInput("cannot open report for writing: " + path);
    auto num = [](real v) {
        if (std::isnan(v)) return std::string("nan");
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return std::string(buf);
    };
    f << "name\tsnr_db\tmcd_db\tf0_rmse_cents\tvuv_err_pct\tutmos\n";
    real s1 = 0, s2 = 0, s4 = 0;
    real s3 = 0;
    long n3 = 0;
    for (const auto& r : rows) {
        f << r.name << '\t' << num(r.snr_db) << '\t' << num(r.mcd_db) << '\t'
          << num(r.f0_rmse_cents) << '\t' << num(r.vuv_err_pct) << "\t-\n";
        s1 += r.snr_db;
        s2 += r.mcd_db;
        s4 += r.vuv_err_pct;
        if (!std::isnan(r.f0_rmse_cents)) {
            s3 += r.f0_rmse_cents;
            ++n3;
        }
    }
    if (!rows.empty()) {
        const real n = static_cast<real>(rows.size());
        f << "MEAN\t" << num(s1 / n) << '\t' << num(s2 / n) << '\t'
          << num(n3 > 0 ? s3 / static_cast<real>(n3) : std::numeric_limits<real>::quiet_NaN())
          << '\t' << num(s4 / n) << "\t-\n";
    }
    for (const auto& u : unmatched) f << "# unmatched: " << u << '\n';
}

}  // namespace freegan

#endif  // FREEGAN_METRICS_HPP
