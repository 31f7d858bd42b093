#include "slm/context.hpp"

#include <cmath>
#include <stdexcept>

namespace slm {

std::optional<ContextTurn> previous_turn(const Conversation & conv, int index) {
    if (index < 0 || index >= static_cast<int>(conv.turns.size())) {
        throw std::out_of_range("previous_turn: index out of range");
    }
    if (index == 0) {
        return std::nullopt;
    }
    const auto & turn = conv.turns[static_cast<size_t>(index - 1)];
    return ContextTurn{turn.speaker_id, turn.text};
}

ContextPrompt build_context_prompt(const std::optional<ContextTurn> & context,
                                   Speaker current_speaker) {
    (void)current_speaker; // both speakers share the template
    ContextPrompt prompt;
    if (context) {
        prompt.context_text = speaker_tag(context->speaker) + ": " + context->text;
    }
    prompt.rendered = prompt.template_str;
    const auto slot = prompt.rendered.find(kContextSlot);
    prompt.rendered.replace(slot, std::string(kContextSlot).size(), prompt.context_text);
    const auto marker = prompt.rendered.find(kAudioMarker);
    prompt.audio_marker_offset = static_cast<int>(marker);
    return prompt;
}

// ------------------------------------------------------ ContrastiveHead

ContrastiveHead::ContrastiveHead(int dim, uint64_t seed)
    : d(dim),
      w_speech("con.w_speech", dim, dim), b_speech("con.b_speech", 1, dim),
      w_context("con.w_context", dim, dim), b_context("con.b_context", 1, dim),
      no_context("con.no_context", 1, dim) {
    auto rng = make_rng(seed);
    normal_init(w_speech.v, rng, 0.02);
    normal_init(w_context.v, rng, 0.02);
    normal_init(no_context.v, rng, 0.02);
}

static Mat pool_linear_norm(const Mat & input, const Param & w, const Param & b,
                            PoolCache & cache, bool use_no_context, const Param * no_ctx) {
    if (use_no_context) {
        cache.pooled = no_ctx->v;
        cache.used_no_context = true;
    } else {
        if (input.rows < 1) {
            throw std::invalid_argument("pool: input must be non-empty");
        }
        cache.input = input;
        cache.pooled = Mat(1, input.cols);
        for (int i = 0; i < input.rows; ++i) {
            for (int j = 0; j < input.cols; ++j) {
                cache.pooled(0, j) += input(i, j) / input.rows;
            }
        }
        cache.used_no_context = false;
    }
    kernels::serial::matmul_nt(cache.pooled, w.v, cache.lin_out);
    for (int j = 0; j < cache.lin_out.cols; ++j) {
        cache.lin_out(0, j) += b.v(0, j);
    }
    double norm = 0.0;
    for (double v : cache.lin_out.data) {
        norm += v * v;
    }
    norm = std::max(std::sqrt(norm), 1e-12);
    cache.norm = norm;
    Mat out = cache.lin_out;
    for (auto & v : out.data) {
        v /= norm;
    }
    return out;
}

Mat ContrastiveHead::embed_speech(const Mat & frames, PoolCache & cache) const {
    return pool_linear_norm(frames, w_speech, b_speech, cache, false, nullptr);
}

Mat ContrastiveHead::embed_context(const Mat & token_embeds, PoolCache & cache) const {
    const bool empty = token_embeds.rows == 0;
    return pool_linear_norm(token_embeds, w_context, b_context, cache, empty, &no_context);
}

// d_out -> d_lin through y = z / ||z||, then through the affine map.
static Mat norm_linear_backward(const Mat & d_out, const PoolCache & cache,
                                Param & w, Param & b) {
    const int d = d_out.cols;
    Mat y = cache.lin_out;
    for (auto & v : y.data) {
        v /= cache.norm;
    }
    double dot = 0.0;
    for (int j = 0; j < d; ++j) {
        dot += y(0, j) * d_out(0, j);
    }
    Mat d_lin(1, d);
    for (int j = 0; j < d; ++j) {
        d_lin(0, j) = (d_out(0, j) - y(0, j) * dot) / cache.norm;
    }
    for (int o = 0; o < d; ++o) {
        b.g(0, o) += d_lin(0, o);
        for (int i = 0; i < d; ++i) {
            w.g(o, i) += d_lin(0, o) * cache.pooled(0, i);
        }
    }
    Mat d_pooled;
    kernels::serial::matmul(d_lin, w.v, d_pooled); // [1 x d]
    return d_pooled;
}

void ContrastiveHead::backward_speech(const Mat & d_out, const PoolCache & cache,
                                      Mat * d_frames) {
    Mat d_pooled = norm_linear_backward(d_out, cache, w_speech, b_speech);
    if (d_frames) {
        const int t = cache.input.rows;
        *d_frames = Mat(t, d);
        for (int i = 0; i < t; ++i) {
            for (int j = 0; j < d; ++j) {
                (*d_frames)(i, j) = d_pooled(0, j) / t;
            }
        }
    }
}

void ContrastiveHead::backward_context(const Mat & d_out, const PoolCache & cache) {
    Mat d_pooled = norm_linear_backward(d_out, cache, w_context, b_context);
    if (cache.used_no_context) {
        for (int j = 0; j < d; ++j) {
            no_context.g(0, j) += d_pooled(0, j);
        }
    }
    // token embeddings are frozen, so the non-empty path stops here
}

ParamList ContrastiveHead::params() {
    return {&w_speech, &b_speech, &w_context, &b_context, &no_context};
}

uint64_t ContrastiveHead::checksum() {
    auto p = params();
    return params_checksum(p);
}

// ------------------------------------------------------ contrastive_loss

double contrastive_loss(const ContrastiveBatch & batch, Mat * d_speech, Mat * d_context) {
    if (batch.temperature <= 0.0) {
        throw std::invalid_argument("contrastive_loss: temperature must be > 0");
    }
    const int n = batch.speech_reps.rows;
    if (n < 1 || batch.context_reps.rows != n ||
        batch.speech_reps.cols != batch.context_reps.cols) {
        throw std::invalid_argument("contrastive_loss: batch shape mismatch");
    }
    Mat s;
    kernels::matmul_nt(batch.speech_reps, batch.context_reps, s); // [N x N]
    for (auto & v : s.data) {
        v /= batch.temperature;
    }
    Mat p_rows = s;
    softmax_rows(p_rows);
    Mat s_t(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            s_t(i, j) = s(j, i);
        }
    }
    Mat p_cols = s_t; // softmax over columns of S == rows of S^T
    softmax_rows(p_cols);

    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        loss += -std::log(std::max(p_rows(i, i), 1e-300));
        loss += -std::log(std::max(p_cols(i, i), 1e-300));
    }
    loss /= 2.0 * n;

    if (d_speech || d_context) {
        Mat ds(n, n);
        const double inv = 1.0 / (2.0 * n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                double g = p_rows(i, j) + p_cols(j, i);
                if (i == j) {
                    g -= 2.0;
                }
                ds(i, j) = g * inv / batch.temperature;
            }
        }
        if (d_speech) {
            kernels::matmul(ds, batch.context_reps, *d_speech);
        }
        if (d_context) {
            kernels::matmul_tn(ds, batch.speech_reps, *d_context);
        }
    }
    return loss;
}

} // namespace slm
