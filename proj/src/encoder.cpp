#include "slm/encoder.hpp"
#include "slm/checkpoint.hpp"

#include <cmath>
#include <stdexcept>

namespace slm {

Encoder::Encoder(const EncoderConfig & config) : cfg(config) {
    if (cfg.d_enc <= 0) {
        throw std::invalid_argument("encoder: d_enc must be positive");
    }
    auto rng = make_rng(cfg.seed);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const int d_in = (l == 0) ? cfg.n_mels : cfg.d_enc;
        convs.emplace_back("enc.conv" + std::to_string(l), 3 * d_in, cfg.d_enc);
        convs.back().init(rng, 0.05);
    }
    if (cfg.kind == EncoderConfig::Kind::external) {
        if (cfg.weights_path.empty()) {
            throw std::invalid_argument(
                "encoder: kind 'external' requires weights_path (no pretrained weights ship "
                "with this project)");
        }
        auto blobs = load_named_mats(cfg.weights_path);
        for (auto & conv : convs) {
            for (Param * p : {&conv.w, &conv.bias}) {
                auto it = blobs.find(p->name);
                if (it == blobs.end()) {
                    throw std::runtime_error("external encoder weights: missing blob " + p->name);
                }
                if (!it->second.same_shape(p->v)) {
                    throw std::runtime_error("external encoder weights: shape mismatch for " +
                                             p->name);
                }
                p->v = it->second;
            }
        }
    }
}

EncoderOutput Encoder::encode(const MelFeatures & mel) const {
    if (mel.n_mels != cfg.n_mels) {
        throw std::invalid_argument("encoder: expected " + std::to_string(cfg.n_mels) +
                                    " mel bins, got " + std::to_string(mel.n_mels));
    }
    const int t = mel.data.rows;
    Mat x = mel.data;
    for (size_t l = 0; l < convs.size(); ++l) {
        const Linear & conv = convs[l];
        const int d_in = x.cols;
        const int d_out = conv.w.v.rows;
        Mat y(t, d_out);
        // kernel width 3, stride 1, zero padding at the edges
        for (int i = 0; i < t; ++i) {
            for (int o = 0; o < d_out; ++o) {
                double acc = conv.bias.v(0, o);
                const double * wrow = conv.w.v.row_ptr(o);
                for (int k = -1; k <= 1; ++k) {
                    const int src = i + k;
                    if (src < 0 || src >= t) {
                        continue;
                    }
                    const double * xr = x.row_ptr(src);
                    const double * wk = wrow + (k + 1) * d_in;
                    for (int c = 0; c < d_in; ++c) {
                        acc += wk[c] * xr[c];
                    }
                }
                y(i, o) = acc;
            }
        }
        if (l + 1 < convs.size()) {
            for (auto & v : y.data) {
                v = std::tanh(v);
            }
        }
        x = std::move(y);
    }
    EncoderOutput out;
    out.frames = std::move(x);
    out.d_enc = cfg.d_enc;
    out.frame_rate = 1000.0 / mel.frame_shift_ms;
    return out;
}

ParamList Encoder::params() {
    ParamList out;
    for (auto & conv : convs) {
        conv.collect(out);
    }
    return out;
}

uint64_t Encoder::checksum() {
    return params_checksum(params());
}

} // namespace slm
