#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

namespace psi {

inline constexpr uint64_t kFnvOffset = 14695981039346656037ull;
inline constexpr uint64_t kFnvPrime = 1099511628211ull;

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = kFnvOffset) {
    return fnv1a64(s.data(), s.size(), h);
}

std::string hex64(uint64_t v);

/// FNV-1a over a file's raw bytes; throws DataError if the file can't be read.
uint64_t hash_file(const std::filesystem::path& path);

}  // namespace psi
