#ifndef FREEGAN_DSP_HPP
#define FREEGAN_DSP_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <utility>
#include <vector>

#include "freegan/common.hpp"
#include "freegan/config.hpp"
#include "freegan/fft.hpp"
#include "freegan/spectrogram.hpp"

// Deterministic, differentiation-free spectral primitives. Everything here is
// a pure function of its inputs and safe to call concurrently.

namespace freegan {

// Periodic Hann. Applied in both analysis and synthesis; the overlap-added
// squared window is normalized per sample, so reconstruction is exact
// wherever the window-sum is positive.
inline std::vector<real> hann_window(int len) {
    std::vector<real> w(static_cast<size_t>(len));
    for (int i = 0; i < len; ++i)
        w[i] = 0.5 * (1.0 - std::cos(kTwoPi * i / static_cast<real>(len)));
    return w;
}

// Mirror index for reflect padding (no edge repetition). Valid for any n >= 1.
inline long reflect_index(long i, long n) {
    if (n == 1) return 0;
    const long period = 2 * (n - 1);
    long m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - m;
}

// Center-padded frame extraction: frame s covers padded[s*shift, s*shift+frame_len),
// i.e. original coordinates [s*shift - pad, s*shift - pad + frame_len).
inline std::vector<real> extract_frames(const std::vector<real>& wave, const SpectralConfig& cfg) {
    const long len = static_cast<long>(wave.size());
    const int frames = cfg.frame_count(len);
    std::vector<real> out(static_cast<size_t>(frames) * cfg.frame_len);
    for (int s = 0; s < frames; ++s) {
        const long base = static_cast<long>(s) * cfg.frame_shift - cfg.pad();
        for (int i = 0; i < cfg.frame_len; ++i)
            out[static_cast<size_t>(s) * cfg.frame_len + i] = wave[reflect_index(base + i, len)];
    }
    return out;
}

// STFT -> (amplitude, phase). Phase is the principal-value argument in (-pi, pi];
// bins of an all-zero frame get phase 0 (atan2(0,0) convention).
inline std::pair<Spectrogram, Spectrogram> stft(const std::vector<real>& wave,
                                                const SpectralConfig& cfg) {
    cfg.validate();
    if (wave.empty()) throw InvalidInput("stft: empty wave");
    const int n_freq = cfg.n_freq();
    const int frames = cfg.frame_count(static_cast<long>(wave.size()));
    const std::vector<real> win = hann_window(cfg.frame_len);
    const std::vector<real> framed = extract_frames(wave, cfg);

    Spectrogram amp(frames, n_freq, SpecDomain::Amplitude, cfg);
    Spectrogram phase(frames, n_freq, SpecDomain::Phase, cfg);
    std::vector<real> buf(static_cast<size_t>(cfg.frame_len));
    for (int s = 0; s < frames; ++s) {
        for (int i = 0; i < cfg.frame_len; ++i)
            buf[i] = framed[static_cast<size_t>(s) * cfg.frame_len + i] * win[i];
        const auto spec = rfft(buf, cfg.fft_size);
        for (int n = 0; n < n_freq; ++n) {
            amp.at(s, n) = std::abs(spec[n]);
            real p = std::atan2(spec[n].imag(), spec[n].real());
            if (p <= -kPi) p = kPi;  // keep range (-pi, pi]
            phase.at(s, n) = p;
        }
    }
    return {std::move(amp), std::move(phase)};
}

// Squared-window overlap-add denominator over the untrimmed synthesis buffer.
inline std::vector<real> window_sum(int frames, const SpectralConfig& cfg) {
    const std::vector<real> win = hann_window(cfg.frame_len);
    const long buflen = static_cast<long>(frames - 1) * cfg.frame_shift + cfg.frame_len;
    std::vector<real> den(static_cast<size_t>(buflen), 0.0);
    for (int s = 0; s < frames; ++s)
        for (int i = 0; i < cfg.frame_len; ++i)
            den[static_cast<size_t>(s) * cfg.frame_shift + i] += win[i] * win[i];
    return den;
}

namespace detail {

// Overlap-add synthesis up to (but not including) the center-padding trim.
// Returned buffer has length (frames-1)*shift + frame_len. Positions where the
// window-sum vanishes (only the very first sample for periodic Hann) are left 0.
inline std::vector<real> istft_buffer(const Spectrogram& amplitude, const Spectrogram& phase,
                                      const SpectralConfig& cfg) {
    const int frames = amplitude.frames;
    const int n_freq = cfg.n_freq();
    const std::vector<real> win = hann_window(cfg.frame_len);
    const std::vector<real> den = window_sum(frames, cfg);
    std::vector<real> buf(den.size(), 0.0);

    std::vector<std::complex<real>> spec(static_cast<size_t>(n_freq));
    for (int s = 0; s < frames; ++s) {
        for (int n = 0; n < n_freq; ++n)
            spec[n] = std::polar(amplitude.at(s, n), phase.at(s, n));
        const std::vector<real> t = irfft(spec, cfg.fft_size);
        // analysis placed the frame at the start of the FFT buffer
        for (int i = 0; i < cfg.frame_len; ++i)
            buf[static_cast<size_t>(s) * cfg.frame_shift + i] += t[i] * win[i];
    }
    for (size_t i = 0; i < buf.size(); ++i)
        if (den[i] > 1e-12) buf[i] /= den[i];
    return buf;
}

}  // namespace detail

// Inverse STFT with window-sum normalization; output length frames*frame_shift
// (center padding trimmed).
inline std::vector<real> istft(const Spectrogram& amplitude, const Spectrogram& phase,
                               const SpectralConfig& cfg) {
    cfg.validate();
    if (amplitude.frames != phase.frames || amplitude.bins != phase.bins)
        throw ShapeError("istft: amplitude/phase shape mismatch");
    if (amplitude.bins != cfg.n_freq()) throw ShapeError("istft: bins != n_freq");
    if (amplitude.domain != SpecDomain::Amplitude || phase.domain != SpecDomain::Phase)
        throw InvalidInput("istft: wrong spectrogram domains");
    const int frames = amplitude.frames;
    const std::vector<real> den = window_sum(frames, cfg);
    const long out_len = static_cast<long>(frames) * cfg.frame_shift;
    // the kept region must be fully covered by overlapping windows
    for (long i = cfg.pad(); i < cfg.pad() + out_len; ++i)
        if (den[static_cast<size_t>(i)] <= 1e-12)
            throw ConfigError("istft: zero window-sum inside output region");
    std::vector<real> buf = detail::istft_buffer(amplitude, phase, cfg);
    return std::vector<real>(buf.begin() + cfg.pad(), buf.begin() + cfg.pad() + out_len);
}

// HTK mel scale.
inline real hz_to_mel(real hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline real mel_to_hz(real mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Moore-Penrose pseudo-inverse by SVD; singular values below rcond*sigma_max
// are treated as zero. Input is row-major rows x cols, output cols x rows.
inline std::vector<real> pinv(const std::vector<real>& m, int rows, int cols, real rcond = 1e-8) {
    using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> a(m.data(), rows, cols);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const real cutoff = rcond * (sv.size() > 0 ? sv(0) : 0.0);
    Eigen::VectorXd inv_sv(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        inv_sv(i) = sv(i) > cutoff ? 1.0 / sv(i) : 0.0;
    Eigen::MatrixXd p = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
    std::vector<real> out(static_cast<size_t>(cols) * rows);
    Eigen::Map<Mat>(out.data(), cols, rows) = p;
    return out;
}

// Triangular mel filterbank, unit peak, spanning 0 Hz to Nyquist, plus the
// pseudo-inverse used for the amplitude prior.
inline MelFilter mel_filterbank(const SpectralConfig& cfg) {
    cfg.validate();
    const int n_freq = cfg.n_freq();
    const int K = cfg.mel_bins;
    const real nyquist = cfg.sample_rate_hz / 2.0;
    const real mel_max = hz_to_mel(nyquist);

    std::vector<real> edges(static_cast<size_t>(K) + 2);
    for (int k = 0; k < K + 2; ++k)
        edges[k] = mel_to_hz(mel_max * k / static_cast<real>(K + 1));

    MelFilter filt;
    filt.n_freq = n_freq;
    filt.mel_bins = K;
    filt.forward.assign(static_cast<size_t>(n_freq) * K, 0.0);
    const real bin_hz = static_cast<real>(cfg.sample_rate_hz) / cfg.fft_size;
    for (int k = 0; k < K; ++k) {
        const real left = edges[k], center = edges[k + 1], right = edges[k + 2];
        bool hit = false;
        for (int n = 0; n < n_freq; ++n) {
            const real f = n * bin_hz;
            real w = 0.0;
            if (f > left && f < center)
                w = (f - left) / (center - left);
            else if (f >= center && f < right)
                w = (right - f) / (right - center);
            if (w > 0.0) {
                filt.forward[static_cast<size_t>(n) * K + k] = w;
                hit = true;
            }
        }
        if (!hit) {
            // degenerate filter narrower than one bin: snap to nearest bin
            int n = static_cast<int>(std::lround(center / bin_hz));
            n = std::clamp(n, 0, n_freq - 1);
            filt.forward[static_cast<size_t>(n) * K + k] = 1.0;
        }
    }
    filt.pseudo_inverse = pinv(filt.forward, n_freq, K);
    return filt;
}

// Projects an amplitude spectrogram through the analysis filterbank.
inline Spectrogram mel_project(const Spectrogram& amp, const MelFilter& filt) {
    if (amp.bins != filt.n_freq) throw ShapeError("mel_project: bins != n_freq");
    using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Spectrogram mel(amp.frames, filt.mel_bins, SpecDomain::Mel, amp.cfg);
    Eigen::Map<Mat>(mel.data.data(), amp.frames, filt.mel_bins) =
        Eigen::Map<const Mat>(amp.data.data(), amp.frames, amp.bins) *
        Eigen::Map<const Mat>(filt.forward.data(), filt.n_freq, filt.mel_bins);
    return mel;
}

inline Spectrogram mel_spectrogram(const std::vector<real>& wave, const SpectralConfig& cfg) {
    const MelFilter filt = mel_filterbank(cfg);
    auto [amp, phase] = stft(wave, cfg);
    Spectrogram mel = mel_project(amp, filt);
    for (auto& v : mel.data) v = std::max(v, cfg.amp_floor);
    return mel;
}

inline Spectrogram mel_spectrogram(const std::vector<real>& wave, const SpectralConfig& cfg,
                                   const MelFilter& filt) {
    auto [amp, phase] = stft(wave, cfg);
    Spectrogram mel = mel_project(amp, filt);
    for (auto& v : mel.data) v = std::max(v, cfg.amp_floor);
    return mel;
}

// Amplitude prior: elementwise max(|X . pseudo_inverse|, eps). Accepts any
// mel-domain data, including malformed negative values; output is >= eps.
inline Spectrogram amplitude_prior(const Spectrogram& x, const MelFilter& filt, real eps) {
    if (x.domain != SpecDomain::Mel) throw InvalidInput("amplitude_prior: input must be Mel");
    if (x.bins != filt.mel_bins) throw ShapeError("amplitude_prior: mel bin mismatch");
    using Mat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Spectrogram prior(x.frames, filt.n_freq, SpecDomain::Amplitude, x.cfg);
    Eigen::Map<Mat>(prior.data.data(), x.frames, filt.n_freq) =
        Eigen::Map<const Mat>(x.data.data(), x.frames, x.bins) *
        Eigen::Map<const Mat>(filt.pseudo_inverse.data(), filt.mel_bins, filt.n_freq);
    for (auto& v : prior.data) v = std::max(std::abs(v), eps);
    return prior;
}

// Anti-wrapping function: |x - 2*pi*round(x/(2*pi))|, in [0, pi].
// std::round ties away from zero, which fixes round(1.5) = 2.
inline real anti_wrap(real x) {
    if (!std::isfinite(x)) throw InvalidInput("anti_wrap: non-finite input");
    return std::abs(x - kTwoPi * std::round(x / kTwoPi));
}

enum class PhaseAxis { Frequency, Time };

// Forward differences along bins (Frequency) or frames (Time). Output keeps
// the F x N shape by replicating the final difference at the trailing edge.
inline std::vector<real> phase_differential(const Spectrogram& p, PhaseAxis axis) {
    if (p.domain != SpecDomain::Phase) throw InvalidInput("phase_differential: input must be Phase");
    const int F = p.frames, N = p.bins;
    if (axis == PhaseAxis::Time && F < 2)
        throw InvalidInput("phase_differential: need at least 2 frames for Time axis");
    if (axis == PhaseAxis::Frequency && N < 2)
        throw InvalidInput("phase_differential: need at least 2 bins for Frequency axis");
    std::vector<real> d(static_cast<size_t>(F) * N);
    if (axis == PhaseAxis::Frequency) {
        for (int f = 0; f < F; ++f) {
            for (int n = 0; n < N - 1; ++n)
                d[static_cast<size_t>(f) * N + n] = p.at(f, n + 1) - p.at(f, n);
            d[static_cast<size_t>(f) * N + N - 1] = d[static_cast<size_t>(f) * N + N - 2];
        }
    } else {
        for (int f = 0; f < F - 1; ++f)
            for (int n = 0; n < N; ++n)
                d[static_cast<size_t>(f) * N + n] = p.at(f + 1, n) - p.at(f, n);
        for (int n = 0; n < N; ++n)
            d[static_cast<size_t>(F - 1) * N + n] = d[static_cast<size_t>(F - 2) * N + n];
    }
    return d;
}

}  // namespace freegan

#endif  // FREEGAN_DSP_HPP
