#ifndef FREEGAN_WAV_IO_HPP
#define FREEGAN_WAV_IO_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "freegan/common.hpp"

// 16-bit PCM mono RIFF/WAVE only. Decoding divides by 32768, so integer
// sample data round-trips losslessly through read/write.

namespace freegan {

struct AudioFile {
    std::vector<real> samples;  // [-1, 1]
    int sample_rate_hz = 0;
    std::string source_path;
};

namespace detail {

inline uint32_t rd_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t rd_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

inline AudioFile read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open: " + path);
    std::vector<uint8_t> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0)
        throw FormatError("missing RIFF header: " + path);
    if (std::memcmp(b.data() + 8, "WAVE", 4) != 0) throw FormatError("missing WAVE tag: " + path);

    bool have_fmt = false;
    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    size_t data_off = 0, data_len = 0;
    size_t pos = 12;
    while (pos + 8 <= b.size()) {
        const std::string id(reinterpret_cast<const char*>(&b[pos]), 4);
        const uint32_t len = detail::rd_u32(&b[pos + 4]);
        pos += 8;
        if (pos + len > b.size()) throw FormatError("truncated chunk '" + id + "': " + path);
        if (id == "fmt ") {
            if (len < 16) throw FormatError("fmt chunk too short: " + path);
            format = detail::rd_u16(&b[pos]);
            channels = detail::rd_u16(&b[pos + 2]);
            rate = detail::rd_u32(&b[pos + 4]);
            bits = detail::rd_u16(&b[pos + 14]);
            have_fmt = true;
        } else if (id == "data") {
            data_off = pos;
            data_len = len;
        }
        pos += len + (len & 1);  // chunks are word-aligned
    }
    if (!have_fmt) throw FormatError("missing fmt chunk: " + path);
    if (format != 1)
        throw FormatError("format tag " + std::to_string(format) + " (want PCM=1): " + path);
    if (channels != 1)
        throw FormatError("channels=" + std::to_string(channels) + " (want mono): " + path);
    if (bits != 16) throw FormatError("bits=" + std::to_string(bits) + " (want 16): " + path);
    if (data_off == 0) throw FormatError("missing data chunk: " + path);

    AudioFile audio;
    audio.sample_rate_hz = static_cast<int>(rate);
    audio.source_path = path;
    const size_t n = data_len / 2;
    audio.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const int16_t s = static_cast<int16_t>(detail::rd_u16(&b[data_off + 2 * i]));
        audio.samples[i] = static_cast<real>(s) / 32768.0;
    }
    return audio;
}

inline void write_wav(const std::string& path, const AudioFile& audio) {
    const uint32_t n = static_cast<uint32_t>(audio.samples.size());
    const uint32_t data_len = n * 2;
    std::vector<uint8_t> out;
    out.reserve(44 + data_len);
    auto put_u32 = [&](uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
    };
    auto put_u16 = [&](uint16_t v) {
        out.push_back(static_cast<uint8_t>(v & 0xFF));
        out.push_back(static_cast<uint8_t>(v >> 8));
    };
    auto put_tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
    put_tag("RIFF");
    put_u32(36 + data_len);
    put_tag("WAVE");
    put_tag("fmt ");
    put_u32(16);
    put_u16(1);  // PCM
    put_u16(1);  // mono
    put_u32(static_cast<uint32_t>(audio.sample_rate_hz));
    put_u32(static_cast<uint32_t>(audio.sample_rate_hz) * 2);
    put_u16(2);   // block align
    put_u16(16);  // bits
    put_tag("data");
    put_u32(data_len);
    for (real s : audio.samples) {
        long q = std::lround(s * 32768.0);
        q = std::max(-32768L, std::min(32767L, q));
        put_u16(static_cast<uint16_t>(static_cast<int16_t>(q)));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InvalidInput("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw InvalidInput("write failed: " + path);
}

}  // namespace freegan

#endif  // FREEGAN_WAV_IO_HPP
