#pragma once

#include "slm/audio_frontend.hpp"
#include "slm/mat.hpp"
#include "slm/nn.hpp"

#include <string>

namespace slm {

struct EncoderOutput {
    Mat frames; // [T_enc x d_enc]
    int d_enc = 0;
    double frame_rate = 100.0; // frames per second
};

struct EncoderConfig {
    enum class Kind { toy_conv, external } kind = Kind::toy_conv;
    int d_enc = 64;
    int n_layers = 2;
    int n_mels = 128;
    uint64_t seed = 0;
    bool frozen = true;
    std::string weights_path; // required for kind == external
};

// Frozen speech encoder. The toy encoder is a stride-1 conv stack over mel
// frames, so T_enc == n_frames and all downsampling happens in the projector.
struct Encoder {
    EncoderConfig cfg;
    std::vector<Linear> convs; // kernel width 3, acting on stacked neighbor frames

    explicit Encoder(const EncoderConfig & config);

    EncoderOutput encode(const MelFeatures & mel) const;

    ParamList params();
    uint64_t checksum();
};

// True iff the two checksums are equal. The trainer asserts this after every
// optimization step for the frozen parameter groups.
inline bool freeze_check(uint64_t before, uint64_t after) {
    return before == after;
}

} // namespace slm
