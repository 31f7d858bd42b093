#pragma once

#include "slm/corpus.hpp"
#include "slm/mat.hpp"
#include "slm/nn.hpp"

#include <optional>
#include <string>

namespace slm {

// Prompt template with the context and audio slots.
inline constexpr const char * kPromptTemplate =
    "[CONTEXT INFO]. Given the conversation history above between two speakers "
    "(O1 and O2), please transcribe the speech below. Speech: [AUDIO]. Transcription:";

inline constexpr const char * kAudioMarker = "[AUDIO]";
inline constexpr const char * kContextSlot = "[CONTEXT INFO]";

struct ContextTurn {
    Speaker speaker;
    std::string text;
};

struct ContextPrompt {
    std::string context_text; // empty for the first turn of a dialogue
    std::string template_str = kPromptTemplate;
    std::string rendered;
    int audio_marker_offset = 0; // token index of the audio marker (char tokenizer)
};

// Most recent preceding utterance in the conversation, or nullopt at index 0.
std::optional<ContextTurn> previous_turn(const Conversation & conv, int index);

// Renders the template byte-exactly. The context slot receives
// "{speaker}: {text}" or the empty string; the literal substitution is kept
// even when that leaves a leading ". ".
ContextPrompt build_context_prompt(const std::optional<ContextTurn> & context,
                                   Speaker current_speaker);

// Mean-pool + trainable linear + L2 normalization for both modalities, with
// a learned no-context embedding standing in for empty contexts.
struct PoolCache {
    Mat input;    // [T x d_in]
    Mat pooled;   // [1 x d_in]
    Mat lin_out;  // [1 x d]
    double norm = 0.0;
    bool used_no_context = false;
};

struct ContrastiveHead {
    int d = 0;
    Param w_speech, b_speech;   // [d x d], [1 x d]
    Param w_context, b_context;
    Param no_context;           // [1 x d]

    ContrastiveHead() = default;
    ContrastiveHead(int dim, uint64_t seed);

    // Returns a unit-norm [1 x d] row.
    Mat embed_speech(const Mat & frames, PoolCache & cache) const;
    Mat embed_context(const Mat & token_embeds, PoolCache & cache) const;

    // Propagates d_out back through norm/linear/pool. d_frames (optional)
    // receives the gradient w.r.t. the pooled input frames.
    void backward_speech(const Mat & d_out, const PoolCache & cache, Mat * d_frames);
    void backward_context(const Mat & d_out, const PoolCache & cache);

    ParamList params();
    uint64_t checksum();
};

struct ContrastiveBatch {
    Mat speech_reps;  // [N x d], unit rows
    Mat context_reps; // [N x d], unit rows; row i pairs with speech row i
    double temperature = 0.07;
};

// Symmetric InfoNCE over the scaled similarity matrix with diagonal targets.
// When gradients are requested they are written to d_speech / d_context.
double contrastive_loss(const ContrastiveBatch & batch, Mat * d_speech = nullptr,
                        Mat * d_context = nullptr);

inline double combined_loss(double ce, double con, double lambda) {
    return ce + lambda * con;
}

} // namespace slm
