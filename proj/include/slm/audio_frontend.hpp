#pragma once

#include "slm/mat.hpp"

#include <cstdint>
#include <vector>

namespace slm {

struct MelProfile {
    int n_mels = 128;
    double frame_length_ms = 25.0;
    double frame_shift_ms = 10.0;
    int sample_rate = 16000;
    double log_floor = -23.025850929940457; // log(1e-10)
};

struct MelFeatures {
    Mat data; // [n_frames x n_mels], log-energy units
    int n_mels = 128;
    double frame_shift_ms = 10.0;
    double frame_length_ms = 25.0;
    int sample_rate = 16000;

    int n_frames() const { return data.rows; }
};

struct AugmentOp {
    enum class Kind { time_stretch, pitch_shift, gaussian_noise, clip_distortion, speed_perturb };
    Kind kind;
    double value = 0.0; // rate / semitones / snr_db / threshold_fraction / factor
};

struct AugmentSpec {
    std::vector<AugmentOp> ops; // applied in order
    uint64_t seed = 0;
};

struct SpecAugmentSpec {
    int n_freq_masks = 2;
    int max_freq_width = 10; // mel bins
    int n_time_masks = 2;
    int max_time_width = 50; // frames
    enum class Fill { zero, mean } fill = Fill::zero;
    uint64_t seed = 0;
};

// Frame count follows 1 + floor((n_samples - win) / hop). Waveforms shorter
// than one window are rejected.
MelFeatures compute_log_mel(const std::vector<double> & waveform, int sample_rate,
                            const MelProfile & profile = {});

// Masks whole mel bins (frequency) and whole frames (time); widths are drawn
// uniformly in [0, max_width]. Same seed gives bit-identical output.
MelFeatures spec_augment(const MelFeatures & mel, const SpecAugmentSpec & spec);

// Resampling: changes tempo and pitch together. Output length round(n / factor).
std::vector<double> speed_perturb(const std::vector<double> & waveform, double factor);

// Overlap-add tempo change, pitch preserved. Output length round(n / rate).
std::vector<double> time_stretch(const std::vector<double> & waveform, double rate);

// Resample + stretch back; output length equals input length exactly.
std::vector<double> pitch_shift(const std::vector<double> & waveform, double semitones);

// Additive noise scaled so the measured SNR equals snr_db exactly.
std::vector<double> gaussian_noise(const std::vector<double> & waveform, double snr_db,
                                   uint64_t seed);

// Hard clip at threshold_fraction * input peak.
std::vector<double> clip_distortion(const std::vector<double> & waveform,
                                    double threshold_fraction);

// Applies spec.ops in order. An empty op list is the identity.
std::vector<double> augment(const std::vector<double> & waveform, int sample_rate,
                            const AugmentSpec & spec);

} // namespace slm
