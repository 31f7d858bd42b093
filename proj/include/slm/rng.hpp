#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace slm {

// FNV-1a over arbitrary bytes. Used both for deriving per-utterance seeds and
// for the freeze-check weight checksums.
inline uint64_t fnv1a(const void * bytes, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto * p = static_cast<const uint8_t *>(bytes);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(s.data(), s.size(), h);
}

// Seed derived from a global seed plus a string key (e.g. utt_id), so
// per-utterance randomness is independent of processing order.
inline uint64_t derive_seed(uint64_t global_seed, std::string_view key) {
    uint64_t h = fnv1a(&global_seed, sizeof(global_seed));
    return fnv1a(key, h);
}

inline std::mt19937_64 make_rng(uint64_t seed) {
    return std::mt19937_64(seed);
}

} // namespace slm
