#ifndef FREEGAN_CHECKPOINT_HPP
#define FREEGAN_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "freegan/common.hpp"

// Checkpoint container format "FGV1":
//   magic "FGV1"
//   u32  tensor count (little-endian)
//   per tensor: u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
//               dim-product float32 little-endian values
//   u32  CRC32 (IEEE) of all preceding bytes
// Step counter, optimizer moments, and the config snapshot are stored as
// ordinary tensors under the "opt/" and "cfg/" prefixes.

namespace freegan {

inline uint32_t crc32_ieee(const uint8_t* data, size_t len, uint32_t seed = 0) {
    static const auto table = [] {
        std::vector<uint32_t> t(256);
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t crc = ~seed;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

struct CheckpointTensor {
    std::string name;
    std::vector<uint32_t> dims;
    std::vector<float> values;

    size_t numel() const {
        size_t n = 1;
        for (uint32_t d : dims) n *= d;
        return dims.empty() ? 1 : n;
    }
};

namespace detail {

inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xFF));
    out.push_back(static_cast<uint8_t>(v >> 8));
}
inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}
inline void put_f32(std::vector<uint8_t>& out, float f) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

struct Cursor {
    const uint8_t* p;
    size_t left;
    void need(size_t n) const {
        if (left < n) throw FormatError("checkpoint truncated");
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(p[0] | (p[1] << 8));
        p += 2;
        left -= 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
        p += 4;
        left -= 4;
        return v;
    }
    uint8_t u8() {
        need(1);
        uint8_t v = *p;
        ++p;
        --left;
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        left -= n;
        return s;
    }
    float f32() {
        uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
};

}  // namespace detail

inline std::vector<uint8_t> encode_checkpoint(const std::vector<CheckpointTensor>& tensors) {
    std::vector<uint8_t> out;
    out.insert(out.end(), {'F', 'G', 'V', '1'});
    detail::put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (t.name.size() > 0xFFFF) throw FormatError("tensor name too long: " + t.name);
        if (t.dims.size() > 0xFF) throw FormatError("tensor rank too high: " + t.name);
        if (t.values.size() != t.numel()) throw FormatError("tensor dims/values mismatch: " + t.name);
        detail::put_u16(out, static_cast<uint16_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        out.push_back(static_cast<uint8_t>(t.dims.size()));
        for (uint32_t d : t.dims) detail::put_u32(out, d);
        for (float f : t.values) detail::put_f32(out, f);
    }
    detail::put_u32(out, crc32_ieee(out.data(), out.size()));
    return out;
}

inline std::vector<CheckpointTensor> decode_checkpoint(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 12) throw FormatError("checkpoint too short");
    if (std::memcmp(bytes.data(), "FGV1", 4) != 0) throw FormatError("bad magic (want FGV1)");
    uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
        stored_crc |= static_cast<uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
    if (crc32_ieee(bytes.data(), bytes.size() - 4) != stored_crc)
        throw FormatError("CRC mismatch");
    detail::Cursor c{bytes.data() + 4, bytes.size() - 8};
    const uint32_t count = c.u32();
    std::vector<CheckpointTensor> tensors;
    tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        CheckpointTensor t;
        t.name = c.str(c.u16());
        const uint8_t rank = c.u8();
        for (int r = 0; r < rank; ++r) t.dims.push_back(c.u32());
        const size_t n = t.numel();
        if (n > (1u << 28)) throw FormatError("tensor too large: " + t.name);
        t.values.resize(n);
        for (size_t k = 0; k < n; ++k) t.values[k] = c.f32();
        tensors.push_back(std::move(t));
    }
    if (c.left != 0) throw FormatError("trailing bytes after tensors");
    return tensors;
}

inline void write_checkpoint_file(const std::string& path,
                                  const std::vector<CheckpointTensor>& tensors) {
    const std::vector<uint8_t> bytes = encode_checkpoint(tensors);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InvalidInput("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw InvalidInput("write failed: " + path);
}

inline std::vector<CheckpointTensor> read_checkpoint_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open checkpoint: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace freegan

#endif  // FREEGAN_CHECKPOINT_HPP
