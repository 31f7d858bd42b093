#pragma once

#include "slm/encoder.hpp"
#include "slm/mat.hpp"
#include "slm/nn.hpp"

#include <vector>

namespace slm {

enum class ProjectorVariant { linear, conv_linear, qformer };

struct ProjectorConfig {
    ProjectorVariant variant = ProjectorVariant::linear;
    int downsample_factor = 4;
    int d_enc = 64;
    int d_llm = 64;
    int qformer_query_len = 64;
    int qformer_layers = 2;
    int qformer_input_len = 1280;
    int qformer_heads = 4;
    int qformer_hidden = 0; // 0 -> d_llm
    uint64_t seed = 0;
};

struct SpeechEmbeds {
    Mat embeds; // [T_proj x d_llm]
};

struct QFormerLayer {
    LayerNorm ln_q;
    MultiHeadAttention attn; // queries cross-attend to the encoder memory
    LayerNorm ln_ffn;
    FeedForward ffn;
};

// Trainable modality bridge. linear: stack k frames -> affine. conv_linear:
// width-k stride-k conv, GELU, then linear. qformer: fixed learned queries
// cross-attending to the (padded, masked) encoder sequence; output length is
// always qformer_query_len regardless of input length.
struct Projector {
    ProjectorConfig cfg;

    // linear / conv_linear
    Linear stack_proj;  // linear variant: [d_llm x k*d_enc]
    Linear conv;        // conv_linear: [hidden x k*d_enc]
    Linear conv_out;    // conv_linear: [d_llm x hidden]

    // qformer
    Param queries; // [query_len x hidden]
    Linear in_proj;   // d_enc -> hidden
    std::vector<QFormerLayer> layers;
    LayerNorm ln_out;
    Linear out_proj;  // hidden -> d_llm

    // forward caches
    Mat stacked_cache;
    Mat conv_pre_act_cache;
    std::vector<char> key_valid_cache;
    Mat memory_cache;
    std::vector<Mat> q_layer_inputs;

    explicit Projector(const ProjectorConfig & config);

    SpeechEmbeds project(const EncoderOutput & enc);
    // d_out: [T_proj x d_llm]; accumulates grads into projector params.
    void backward(const Mat & d_out);

    // Diagnostic: per-layer, per-head attention matrices from the last
    // qformer forward. Rows are probability distributions; padded positions
    // carry exactly zero mass.
    std::vector<std::vector<Mat>> qformer_attention_weights(const EncoderOutput & enc);

    ParamList params();
    uint64_t checksum();
};

} // namespace slm
