#ifndef FREEGAN_SPECTROGRAM_HPP
#define FREEGAN_SPECTROGRAM_HPP

#include <vector>

#include "freegan/common.hpp"
#include "freegan/config.hpp"

namespace freegan {

enum class SpecDomain { Amplitude, LogAmplitude, Phase, Mel };

inline const char* to_string(SpecDomain d) {
    switch (d) {
        case SpecDomain::Amplitude: return "Amplitude";
        case SpecDomain::LogAmplitude: return "LogAmplitude";
        case SpecDomain::Phase: return "Phase";
        case SpecDomain::Mel: return "Mel";
    }
    return "?";
}

// Frame-major real matrix (frames x bins) with a domain tag.
// Mel content has cfg.mel_bins columns, everything else cfg.n_freq().
struct Spectrogram {
    int frames = 0;
    int bins = 0;
    SpecDomain domain = SpecDomain::Amplitude;
    SpectralConfig cfg;
    std::vector<real> data;  // row-major

    Spectrogram() = default;
    Spectrogram(int f, int b, SpecDomain d, const SpectralConfig& c)
        : frames(f), bins(b), domain(d), cfg(c), data(static_cast<size_t>(f) * b, 0.0) {}

    real& at(int f, int b) { return data[static_cast<size_t>(f) * bins + b]; }
    real at(int f, int b) const { return data[static_cast<size_t>(f) * bins + b]; }
    size_t size() const { return data.size(); }
};

// Mel analysis matrix (n_freq x mel_bins) and its Moore-Penrose pseudo-inverse
// (mel_bins x n_freq), oriented so that amplitude . forward -> mel and
// mel . pseudo_inverse -> amplitude prior.
struct MelFilter {
    int n_freq = 0;
    int mel_bins = 0;
    std::vector<real> forward;         // n_freq x mel_bins, row-major
    std::vector<real> pseudo_inverse;  // mel_bins x n_freq, row-major
};

}  // namespace freegan

#endif  // FREEGAN_SPECTROGRAM_HPP
