#include "slm/audio_frontend.hpp"
#include "slm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace slm {

static constexpr double kPi = std::numbers::pi;

// In-place iterative radix-2 FFT. n must be a power of two.
static void fft(std::vector<std::complex<double>> & a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) {
            j ^= bit;
        }
        j ^= bit;
        if (i < j) {
            std::swap(a[i], a[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                auto u = a[i + k];
                auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

static double hz_to_mel(double hz) {
    return 2595.0 * std::log10(1.0 + hz / 700.0);
}

static double mel_to_hz(double mel) {
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

MelFeatures compute_log_mel(const std::vector<double> & waveform, int sample_rate,
                            const MelProfile & profile) {
    if (sample_rate != profile.sample_rate) {
        throw std::invalid_argument("compute_log_mel: sample_rate does not match profile");
    }
    const int win = static_cast<int>(std::lround(profile.frame_length_ms * sample_rate / 1000.0));
    const int hop = static_cast<int>(std::lround(profile.frame_shift_ms * sample_rate / 1000.0));
    if (static_cast<int>(waveform.size()) < win) {
        throw std::invalid_argument("compute_log_mel: waveform too short for one window");
    }
    const int n_frames = 1 + static_cast<int>((waveform.size() - win) / hop);

    size_t n_fft = 1;
    while (n_fft < static_cast<size_t>(win)) {
        n_fft <<= 1;
    }
    const size_t n_bins = n_fft / 2 + 1;

    // Hann window
    std::vector<double> window(win);
    for (int i = 0; i < win; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (win - 1));
    }

    // Triangular mel filterbank over [0, sr/2]
    const int n_mels = profile.n_mels;
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(sample_rate / 2.0);
    std::vector<double> centers(n_mels + 2);
    for (int m = 0; m < n_mels + 2; ++m) {
        const double mel = mel_lo + (mel_hi - mel_lo) * m / (n_mels + 1);
        centers[m] = mel_to_hz(mel) * static_cast<double>(n_fft) / sample_rate;
    }

    MelFeatures out;
    out.n_mels = n_mels;
    out.frame_shift_ms = profile.frame_shift_ms;
    out.frame_length_ms = profile.frame_length_ms;
    out.sample_rate = sample_rate;
    out.data = Mat(n_frames, n_mels);

    std::vector<std::complex<double>> buf(n_fft);
    std::vector<double> power(n_bins);
    for (int t = 0; t < n_frames; ++t) {
        const size_t off = static_cast<size_t>(t) * hop;
        for (size_t i = 0; i < n_fft; ++i) {
            buf[i] = (i < static_cast<size_t>(win)) ? waveform[off + i] * window[i] : 0.0;
        }
        fft(buf);
        for (size_t b = 0; b < n_bins; ++b) {
            power[b] = std::norm(buf[b]);
        }
        for (int m = 0; m < n_mels; ++m) {
            const double left = centers[m], center = centers[m + 1], right = centers[m + 2];
            double energy = 0.0;
            const size_t b0 = static_cast<size_t>(std::max(0.0, std::ceil(left)));
            const size_t b1 = std::min(n_bins - 1, static_cast<size_t>(std::floor(right)));
            for (size_t b = b0; b <= b1; ++b) {
                const double f = static_cast<double>(b);
                double w = 0.0;
                if (f >= left && f <= center && center > left) {
                    w = (f - left) / (center - left);
                } else if (f > center && f <= right && right > center) {
                    w = (right - f) / (right - center);
                }
                energy += w * power[b];
            }
            out.data(t, m) = std::log(std::max(energy, 1e-10));
        }
    }
    return out;
}

MelFeatures spec_augment(const MelFeatures & mel, const SpecAugmentSpec & spec) {
    const int n_frames = mel.data.rows;
    const int n_mels = mel.data.cols;
    if (spec.max_freq_width > n_mels || spec.max_time_width > n_frames) {
        throw std::invalid_argument("spec_augment: mask width exceeds axis length");
    }
    MelFeatures out = mel;
    double fill = 0.0;
    if (spec.fill == SpecAugmentSpec::Fill::mean) {
        double sum = 0.0;
        for (double v : mel.data.data) {
            sum += v;
        }
        fill = sum / static_cast<double>(mel.data.size());
    }

    auto rng = make_rng(spec.seed);
    for (int i = 0; i < spec.n_freq_masks; ++i) {
        std::uniform_int_distribution<int> wdist(0, spec.max_freq_width);
        const int w = wdist(rng);
        std::uniform_int_distribution<int> sdist(0, n_mels - w);
        const int f0 = sdist(rng);
        for (int t = 0; t < n_frames; ++t) {
            for (int f = f0; f < f0 + w; ++f) {
                out.data(t, f) = fill;
            }
        }
    }
    for (int i = 0; i < spec.n_time_masks; ++i) {
        std::uniform_int_distribution<int> wdist(0, spec.max_time_width);
        const int w = wdist(rng);
        std::uniform_int_distribution<int> sdist(0, n_frames - w);
        const int t0 = sdist(rng);
        for (int t = t0; t < t0 + w; ++t) {
            for (int f = 0; f < n_mels; ++f) {
                out.data(t, f) = fill;
            }
        }
    }
    return out;
}

// Linear-interpolation resampler shared by speed_perturb and pitch_shift.
static std::vector<double> resample(const std::vector<double> & x, double factor) {
    if (factor == 1.0) {
        return x;
    }
    const size_t n = x.size();
    const size_t out_len = static_cast<size_t>(std::llround(static_cast<double>(n) / factor));
    std::vector<double> y(out_len);
    for (size_t i = 0; i < out_len; ++i) {
        const double pos = static_cast<double>(i) * factor;
        const size_t i0 = std::min(static_cast<size_t>(pos), n - 1);
        const size_t i1 = std::min(i0 + 1, n - 1);
        const double frac = pos - static_cast<double>(i0);
        y[i] = x[i0] * (1.0 - frac) + x[i1] * frac;
    }
    return y;
}

std::vector<double> speed_perturb(const std::vector<double> & waveform, double factor) {
    if (factor <= 0.0) {
        throw std::invalid_argument("speed_perturb: factor must be positive");
    }
    return resample(waveform, factor);
}

std::vector<double> time_stretch(const std::vector<double> & waveform, double rate) {
    if (rate <= 0.0) {
        throw std::invalid_argument("time_stretch: rate must be positive");
    }
    if (rate == 1.0) {
        return waveform;
    }
    const size_t n = waveform.size();
    const size_t out_len = static_cast<size_t>(std::llround(static_cast<double>(n) / rate));

    // Hann-windowed overlap-add at a fixed synthesis hop; analysis positions
    // advance rate times faster.
    const size_t grain = std::min<size_t>(400, std::max<size_t>(4, n));
    const size_t hop_s = std::max<size_t>(1, grain / 2);
    std::vector<double> window(grain);
    for (size_t i = 0; i < grain; ++i) {
        window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / (grain - 1));
    }

    std::vector<double> y(out_len, 0.0);
    std::vector<double> norm(out_len, 0.0);
    for (size_t pos = 0; pos < out_len; pos += hop_s) {
        const double a_center = static_cast<double>(pos) * rate;
        const long long a0 = std::llround(a_center);
        for (size_t i = 0; i < grain; ++i) {
            const size_t oi = pos + i;
            if (oi >= out_len) {
                break;
            }
            const long long ai = a0 + static_cast<long long>(i);
            if (ai < 0 || ai >= static_cast<long long>(n)) {
                continue;
            }
            y[oi] += window[i] * waveform[static_cast<size_t>(ai)];
            norm[oi] += window[i];
        }
    }
    for (size_t i = 0; i < out_len; ++i) {
        if (norm[i] > 1e-8) {
            y[i] /= norm[i];
        }
    }
    return y;
}

std::vector<double> pitch_shift(const std::vector<double> & waveform, double semitones) {
    const double ratio = std::pow(2.0, semitones / 12.0);
    if (ratio == 1.0) {
        return waveform;
    }
    // Resample shifts pitch and duration; the stretch restores duration.
    std::vector<double> shifted = resample(waveform, ratio);
    const double rate = static_cast<double>(shifted.size()) / static_cast<double>(waveform.size());
    std::vector<double> out = time_stretch(shifted, rate);
    out.resize(waveform.size(), 0.0);
    return out;
}

std::vector<double> gaussian_noise(const std::vector<double> & waveform, double snr_db,
                                   uint64_t seed) {
    const size_t n = waveform.size();
    double sig_power = 0.0;
    for (double x : waveform) {
        sig_power += x * x;
    }
    if (sig_power == 0.0) {
        return waveform; // silent input: SNR undefined, leave untouched
    }
    auto rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> noise(n);
    double noise_power = 0.0;
    for (size_t i = 0; i < n; ++i) {
        noise[i] = gauss(rng);
        noise_power += noise[i] * noise[i];
    }
    // Scale so the realized power ratio hits the requested SNR exactly.
    const double target_noise_power = sig_power / std::pow(10.0, snr_db / 10.0);
    const double scale = std::sqrt(target_noise_power / noise_power);
    std::vector<double> y(n);
    for (size_t i = 0; i < n; ++i) {
        y[i] = waveform[i] + scale * noise[i];
    }
    return y;
}

std::vector<double> clip_distortion(const std::vector<double> & waveform,
                                    double threshold_fraction) {
    if (threshold_fraction <= 0.0 || threshold_fraction > 1.0) {
        throw std::invalid_argument("clip_distortion: threshold_fraction must be in (0, 1]");
    }
    double peak = 0.0;
    for (double x : waveform) {
        peak = std::max(peak, std::abs(x));
    }
    const double limit = threshold_fraction * peak;
    std::vector<double> y = waveform;
    for (auto & x : y) {
        x = std::clamp(x, -limit, limit);
    }
    return y;
}

std::vector<double> augment(const std::vector<double> & waveform, int sample_rate,
                            const AugmentSpec & spec) {
    (void)sample_rate;
    std::vector<double> y = waveform;
    uint64_t op_index = 0;
    for (const auto & op : spec.ops) {
        switch (op.kind) {
            case AugmentOp::Kind::time_stretch:
                y = time_stretch(y, op.value);
                break;
            case AugmentOp::Kind::pitch_shift:
                y = pitch_shift(y, op.value);
                break;
            case AugmentOp::Kind::gaussian_noise:
                y = gaussian_noise(y, op.value, derive_seed(spec.seed, std::to_string(op_index)));
                break;
            case AugmentOp::Kind::clip_distortion:
                y = clip_distortion(y, op.value);
                break;
            case AugmentOp::Kind::speed_perturb:
                y = speed_perturb(y, op.value);
                break;
        }
        ++op_index;
    }
    return y;
}

} // namespace slm
