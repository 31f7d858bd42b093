#pragma once

#include "slm/mat.hpp"
#include "slm/nn.hpp"

#include <map>
#include <string>

namespace slm {

inline constexpr uint32_t kCheckpointVersion = 1;

// Single-file binary container: magic, format version, a canonical-text
// config snapshot, then named 64-bit float blobs (weights, optimizer state)
// and named string blobs (RNG streams, counters).
struct Container {
    uint32_t version = kCheckpointVersion;
    std::string config_text;
    std::map<std::string, Mat> mats;
    std::map<std::string, std::string> strings;
};

void save_container(const std::string & path, const Container & c);
Container load_container(const std::string & path);

// Convenience wrappers for plain weight files (e.g. external encoder weights).
void save_named_mats(const std::string & path, const std::map<std::string, Mat> & mats);
std::map<std::string, Mat> load_named_mats(const std::string & path);

} // namespace slm
