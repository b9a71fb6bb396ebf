#ifndef FREEGAN_CONFIG_HPP
#define FREEGAN_CONFIG_HPP

#include "freegan/common.hpp"

namespace freegan {

// Spectral analysis geometry. Governs every frame/bin shape in the system.
struct SpectralConfig {
    int sample_rate_hz = 16000;
    int frame_len = 320;   // analysis window, samples
    int frame_shift = 80;  // hop, samples
    int fft_size = 1024;
    int mel_bins = 80;
    real amp_floor = 1e-5;  // epsilon clamp for amplitudes

    int n_freq() const { return fft_size / 2 + 1; }
    int pad() const { return frame_len / 2; }  // center padding per side

    // Frame count for a waveform of `len` samples under center padding.
    // With pad = frame_len/2 on both sides this reduces to len/shift + 1.
    int frame_count(long len) const {
        return static_cast<int>((len + 2L * pad() - frame_len) / frame_shift) + 1;
    }

    void validate() const {
        if (sample_rate_hz <= 0) throw ConfigError("sample_rate_hz must be positive");
        if (frame_len < 2 || frame_shift < 1) throw ConfigError("frame_len/frame_shift out of range");
        if (fft_size < frame_len) throw ConfigError("fft_size < frame_len");
        if ((fft_size & (fft_size - 1)) != 0) throw ConfigError("fft_size must be a power of two");
        // Hop must leave enough overlap for a positive window-sum everywhere.
        if (frame_shift > frame_len / 2) throw ConfigError("frame_shift > frame_len/2 breaks overlap-add");
        if (frame_len % frame_shift != 0) throw ConfigError("frame_shift must divide frame_len");
        if (mel_bins < 2) throw ConfigError("mel_bins must be >= 2");
        if (mel_bins > n_freq()) throw ConfigError("mel_bins > n_freq");
        if (!(amp_floor > 0)) throw ConfigError("amp_floor must be positive");
    }
};

}  // namespace freegan

#endif  // FREEGAN_CONFIG_HPP
