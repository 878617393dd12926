#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <vector>

#include "psi/common/errors.hpp"

namespace psi {

// Little-endian primitives for the dataset and checkpoint formats. Written
// byte by byte so files are identical regardless of host endianness.

inline void write_u32le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {
        static_cast<unsigned char>(v & 0xff),
        static_cast<unsigned char>((v >> 8) & 0xff),
        static_cast<unsigned char>((v >> 16) & 0xff),
        static_cast<unsigned char>((v >> 24) & 0xff),
    };
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    require_data(is.gcount() == 4, "truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void write_u64le(std::ostream& os, uint64_t v) {
    write_u32le(os, static_cast<uint32_t>(v & 0xffffffffull));
    write_u32le(os, static_cast<uint32_t>(v >> 32));
}

inline uint64_t read_u64le(std::istream& is) {
    const uint64_t lo = read_u32le(is);
    const uint64_t hi = read_u32le(is);
    return lo | (hi << 32);
}

inline void write_f32le(std::ostream& os, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    write_u32le(os, v);
}

inline float read_f32le(std::istream& is) {
    const uint32_t v = read_u32le(is);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

inline void write_f32le_block(std::ostream& os, const float* data, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        write_f32le(os, data[i]);
    }
}

inline void read_f32le_block(std::istream& is, float* data, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        data[i] = read_f32le(is);
    }
}

}  // namespace psi
