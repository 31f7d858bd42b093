#pragma once

#include "slm/context.hpp"
#include "slm/corpus.hpp"
#include "slm/encoder.hpp"
#include "slm/lm.hpp"
#include "slm/projector.hpp"

#include <map>
#include <string>
#include <vector>

namespace slm {

struct ModelConfig {
    EncoderConfig encoder;
    ProjectorConfig projector;
    LmConfig lm;
    uint64_t contrastive_seed = 0;
};

// The full speech-language model: frozen encoder, trainable projector, frozen
// LM base with optional LoRA adapters, and the contrastive alignment head.
struct SlmModel {
    ModelConfig cfg;
    Encoder encoder;
    Projector projector;
    Lm lm;
    ContrastiveHead con_head;

    explicit SlmModel(const ModelConfig & config);

    ParamList all_params();
    std::map<std::string, Mat> export_weights();
    void import_weights(const std::map<std::string, Mat> & blobs, bool strict = true);
};

// One preprocessed utterance ready for training or decoding. Encoder output
// is cached up front: the encoder is frozen, so it never changes.
struct TrainItem {
    std::string utt_id;
    std::string language;
    std::string reference;
    EncoderOutput enc;
    std::vector<int> prompt_pre;     // tokens before the speech embeds
    std::vector<int> prompt_post;    // tokens after the speech embeds
    std::vector<int> target;         // reference tokens + EOS
    std::vector<int> context_tokens; // empty on first turns
};

struct PipelineOptions {
    bool use_context = false;
    std::string plain_prompt = "Transcribe: ";
    MelProfile mel;
};

std::vector<TrainItem> prepare_items(SlmModel & model,
                                     const std::vector<UtteranceRecord> & records,
                                     const WaveformStore & store,
                                     const PipelineOptions & opts);

struct DecodeOptions {
    bool use_context = false;
    bool context_from_hyps = false; // chain decoded outputs instead of references
    std::string plain_prompt = "Transcribe: ";
    int max_len = 64;
    MelProfile mel;
};

// Greedy transcription of every utterance in the manifest. Per-utterance
// failures are recorded and decoding continues.
struct DecodeResult {
    std::map<std::string, std::string> hyps;
    std::vector<std::string> failures;
};

DecodeResult decode_manifest(SlmModel & model, const std::vector<UtteranceRecord> & records,
                             const WaveformStore & store, const DecodeOptions & opts);

// Splits a rendered context prompt at the audio marker into token lists for
// build_spliced_sequence.
std::pair<std::vector<int>, std::vector<int>> split_prompt_at_marker(const Tokenizer & tok,
                                                                     const ContextPrompt & prompt);

} // namespace slm
