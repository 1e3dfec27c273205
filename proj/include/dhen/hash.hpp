#pragma once

#include <cstdint>
#include <string_view>

namespace dhen {

// FNV-1a 64. Used for per-parameter init streams, dataset hashes, and
// checkpoint integrity.
inline uint64_t fnv1a(const void* bytes, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(s.data(), s.size(), h);
}

}  // namespace dhen
