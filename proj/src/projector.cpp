#include "slm/projector.hpp"

#include <stdexcept>

namespace slm {

Projector::Projector(const ProjectorConfig & config) : cfg(config) {
    if (cfg.downsample_factor < 1) {
        throw std::invalid_argument("projector: downsample_factor must be >= 1");
    }
    if (cfg.qformer_query_len < 1 || cfg.qformer_layers < 1) {
        throw std::invalid_argument("projector: qformer query_len and layers must be >= 1");
    }
    if (cfg.qformer_hidden == 0) {
        cfg.qformer_hidden = cfg.d_llm;
    }
    auto rng = make_rng(cfg.seed);
    const int k = cfg.downsample_factor;
    switch (cfg.variant) {
        case ProjectorVariant::linear:
            stack_proj = Linear("proj.linear", k * cfg.d_enc, cfg.d_llm);
            stack_proj.init(rng);
            break;
        case ProjectorVariant::conv_linear:
            conv = Linear("proj.conv", k * cfg.d_enc, cfg.qformer_hidden);
            conv_out = Linear("proj.conv_out", cfg.qformer_hidden, cfg.d_llm);
            conv.init(rng);
            conv_out.init(rng);
            break;
        case ProjectorVariant::qformer: {
            const int h = cfg.qformer_hidden;
            queries = Param("proj.queries", cfg.qformer_query_len, h);
            normal_init(queries.v, rng, 0.02);
            in_proj = Linear("proj.in_proj", cfg.d_enc, h);
            in_proj.init(rng);
            layers.reserve(cfg.qformer_layers);
            for (int l = 0; l < cfg.qformer_layers; ++l) {
                const std::string base = "proj.qf" + std::to_string(l);
                QFormerLayer layer;
                layer.ln_q = LayerNorm(base + ".ln_q", h);
                layer.attn = MultiHeadAttention(base + ".attn", h, cfg.qformer_heads);
                layer.attn.init(rng);
                layer.ln_ffn = LayerNorm(base + ".ln_ffn", h);
                layer.ffn = FeedForward(base + ".ffn", h, 4 * h);
                layer.ffn.init(rng);
                layers.push_back(std::move(layer));
            }
            ln_out = LayerNorm("proj.ln_out", h);
            out_proj = Linear("proj.out_proj", h, cfg.d_llm);
            out_proj.init(rng);
            break;
        }
    }
}

// Concatenate groups of k consecutive frames; tail frames beyond the last
// full group are dropped.
static Mat stack_frames(const Mat & frames, int k) {
    if (frames.rows < k) {
        throw std::invalid_argument("projector: input too short for downsample factor");
    }
    const int t_out = frames.rows / k;
    const int d = frames.cols;
    Mat stacked(t_out, k * d);
    for (int i = 0; i < t_out; ++i) {
        for (int g = 0; g < k; ++g) {
            const double * src = frames.row_ptr(i * k + g);
            double * dst = stacked.row_ptr(i) + g * d;
            std::copy(src, src + d, dst);
        }
    }
    return stacked;
}

SpeechEmbeds Projector::project(const EncoderOutput & enc) {
    if (enc.d_enc != cfg.d_enc) {
        throw std::invalid_argument("projector: d_enc mismatch (expected " +
                                    std::to_string(cfg.d_enc) + ", got " +
                                    std::to_string(enc.d_enc) + ")");
    }
    SpeechEmbeds out;
    switch (cfg.variant) {
        case ProjectorVariant::linear:
            stacked_cache = stack_frames(enc.frames, cfg.downsample_factor);
            out.embeds = stack_proj.forward(stacked_cache);
            break;
        case ProjectorVariant::conv_linear: {
            stacked_cache = stack_frames(enc.frames, cfg.downsample_factor);
            conv_pre_act_cache = conv.forward(stacked_cache);
            Mat h = conv_pre_act_cache;
            for (auto & v : h.data) {
                v = gelu(v);
            }
            out.embeds = conv_out.forward(h);
            break;
        }
        case ProjectorVariant::qformer: {
            const int t = enc.frames.rows;
            if (t > cfg.qformer_input_len) {
                throw std::invalid_argument("projector: qformer input longer than " +
                                            std::to_string(cfg.qformer_input_len) + " frames");
            }
            Mat padded(cfg.qformer_input_len, cfg.d_enc);
            for (int i = 0; i < t; ++i) {
                std::copy(enc.frames.row_ptr(i), enc.frames.row_ptr(i) + cfg.d_enc,
                          padded.row_ptr(i));
            }
            key_valid_cache.assign(cfg.qformer_input_len, 0);
            for (int i = 0; i < t; ++i) {
                key_valid_cache[i] = 1;
            }
            memory_cache = in_proj.forward(padded);

            Mat x = queries.v;
            for (auto & layer : layers) {
                Mat a = layer.attn.forward(layer.ln_q.forward(x), memory_cache, false,
                                           &key_valid_cache);
                for (size_t i = 0; i < x.data.size(); ++i) {
                    x.data[i] += a.data[i];
                }
                Mat f = layer.ffn.forward(layer.ln_ffn.forward(x));
                for (size_t i = 0; i < x.data.size(); ++i) {
                    x.data[i] += f.data[i];
                }
            }
            out.embeds = out_proj.forward(ln_out.forward(x));
            break;
        }
    }
    return out;
}

void Projector::backward(const Mat & d_out) {
    switch (cfg.variant) {
        case ProjectorVariant::linear:
            stack_proj.backward(d_out);
            break;
        case ProjectorVariant::conv_linear: {
            Mat dh = conv_out.backward(d_out);
            for (size_t i = 0; i < dh.data.size(); ++i) {
                dh.data[i] *= gelu_grad(conv_pre_act_cache.data[i]);
            }
            conv.backward(dh);
            break;
        }
        case ProjectorVariant::qformer: {
            Mat dx = ln_out.backward(out_proj.backward(d_out));
            Mat d_memory(memory_cache.rows, memory_cache.cols);
            for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
                // x' = x + ffn(ln_ffn(x))
                Mat du = it->ffn.backward(dx);
                Mat dres = it->ln_ffn.backward(du);
                for (size_t i = 0; i < dx.data.size(); ++i) {
                    dx.data[i] += dres.data[i];
                }
                // x' = x + attn(ln_q(x), memory)
                auto [d_q_in, d_kv_in] = it->attn.backward(dx);
                Mat dres2 = it->ln_q.backward(d_q_in);
                for (size_t i = 0; i < dx.data.size(); ++i) {
                    dx.data[i] += dres2.data[i];
                }
                for (size_t i = 0; i < d_memory.data.size(); ++i) {
                    d_memory.data[i] += d_kv_in.data[i];
                }
            }
            for (size_t i = 0; i < queries.g.data.size(); ++i) {
                queries.g.data[i] += dx.data[i];
            }
            in_proj.backward(d_memory); // grad w.r.t. raw frames discarded (encoder frozen)
            break;
        }
    }
}

std::vector<std::vector<Mat>> Projector::qformer_attention_weights(const EncoderOutput & enc) {
    if (cfg.variant != ProjectorVariant::qformer) {
        throw std::invalid_argument("qformer_attention_weights: projector variant is not qformer");
    }
    project(enc);
    std::vector<std::vector<Mat>> out;
    out.reserve(layers.size());
    for (auto & layer : layers) {
        out.push_back(layer.attn.probs);
    }
    return out;
}

ParamList Projector::params() {
    ParamList out;
    switch (cfg.variant) {
        case ProjectorVariant::linear:
            stack_proj.collect(out);
            break;
        case ProjectorVariant::conv_linear:
            conv.collect(out);
            conv_out.collect(out);
            break;
        case ProjectorVariant::qformer:
            out.push_back(&queries);
            in_proj.collect(out);
            for (auto & layer : layers) {
                layer.ln_q.collect(out);
                layer.attn.collect(out);
                layer.ln_ffn.collect(out);
                layer.ffn.collect(out);
            }
            ln_out.collect(out);
            out_proj.collect(out);
            break;
    }
    return out;
}

uint64_t Projector::checksum() {
    return params_checksum(params());
}

} // namespace slm
