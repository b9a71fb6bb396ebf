#ifndef FREEGAN_MEL_IO_HPP
#define FREEGAN_MEL_IO_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "freegan/common.hpp"
#include "freegan/spectrogram.hpp"

// Mel matrix file: magic "MELB", u32 frame count F, u32 bin count K, then
// F*K float32 values row-major, all little-endian.

namespace freegan {

inline void write_mel_file(const std::string& path, const Spectrogram& mel) {
    if (mel.domain != SpecDomain::Mel) throw InvalidInput("write_mel_file: not a mel spectrogram");
    std::vector<uint8_t> out;
    auto put_u32 = [&](uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
    };
    out.insert(out.end(), {'M', 'E', 'L', 'B'});
    put_u32(static_cast<uint32_t>(mel.frames));
    put_u32(static_cast<uint32_t>(mel.bins));
    for (real v : mel.data) {
        const float f = static_cast<float>(v);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(bits);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InvalidInput("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw InvalidInput("write failed: " + path);
}

// Raw contents; the caller attaches a SpectralConfig and validates K.
struct MelFile {
    uint32_t frames = 0;
    uint32_t bins = 0;
    std::vector<float> values;
};

inline MelFile read_mel_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open: " + path);
    std::vector<uint8_t> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (b.size() < 12 || std::memcmp(b.data(), "MELB", 4) != 0)
        throw FormatError("bad magic (want MELB): " + path);
    auto rd_u32 = [&](size_t off) {
        return static_cast<uint32_t>(b[off]) | (static_cast<uint32_t>(b[off + 1]) << 8) |
               (static_cast<uint32_t>(b[off + 2]) << 16) | (static_cast<uint32_t>(b[off + 3]) << 24);
    };
    MelFile m;
    m.frames = rd_u32(4);
    m.bins = rd_u32(8);
    const size_t n = static_cast<size_t>(m.frames) * m.bins;
    if (b.size() != 12 + 4 * n) throw FormatError("size does not match F*K floats: " + path);
    m.values.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const uint32_t bits = rd_u32(12 + 4 * i);
        float v;
        std::memcpy(&v, &bits, 4);
        m.values[i] = v;
    }
    return m;
}

}  // namespace freegan

#endif  // FREEGAN_MEL_IO_HPP
