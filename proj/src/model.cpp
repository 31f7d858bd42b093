#include "slm/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace slm {

SlmModel::SlmModel(const ModelConfig & config)
    : cfg(config),
      encoder(config.encoder),
      projector(config.projector),
      lm(config.lm),
      con_head(config.lm.d_llm, config.contrastive_seed) {
    if (cfg.projector.d_enc != cfg.encoder.d_enc) {
        throw std::invalid_argument("model: projector d_enc must match encoder d_enc");
    }
    if (cfg.projector.d_llm != cfg.lm.d_llm) {
        throw std::invalid_argument("model: projector d_llm must match lm d_llm");
    }
}

ParamList SlmModel::all_params() {
    ParamList out = encoder.params();
    for (Param * p : projector.params()) {
        out.push_back(p);
    }
    for (Param * p : lm.base_params()) {
        out.push_back(p);
    }
    for (Param * p : lm.lora_params()) {
        out.push_back(p);
    }
    for (Param * p : con_head.params()) {
        out.push_back(p);
    }
    return out;
}

std::map<std::string, Mat> SlmModel::export_weights() {
    std::map<std::string, Mat> blobs;
    for (Param * p : all_params()) {
        blobs[p->name] = p->v;
    }
    return blobs;
}

void SlmModel::import_weights(const std::map<std::string, Mat> & blobs, bool strict) {
    for (Param * p : all_params()) {
        auto it = blobs.find(p->name);
        if (it == blobs.end()) {
            if (strict) {
                throw std::runtime_error("import_weights: missing blob " + p->name);
            }
            continue;
        }
        if (!it->second.same_shape(p->v)) {
            throw std::runtime_error("import_weights: shape mismatch for " + p->name);
        }
        p->v = it->second;
    }
}

static std::string context_text_of(const std::optional<ContextTurn> & turn) {
    if (!turn) {
        return "";
    }
    return speaker_tag(turn->speaker) + ": " + turn->text;
}

std::pair<std::vector<int>, std::vector<int>> split_prompt_at_marker(const Tokenizer & tok,
                                                                     const ContextPrompt & prompt) {
    const auto off = static_cast<size_t>(prompt.audio_marker_offset);
    const std::string pre = prompt.rendered.substr(0, off);
    const std::string post = prompt.rendered.substr(off + std::string(kAudioMarker).size());
    return {tok.tokenize(pre), tok.tokenize(post)};
}

std::vector<TrainItem> prepare_items(SlmModel & model,
                                     const std::vector<UtteranceRecord> & records,
                                     const WaveformStore & store,
                                     const PipelineOptions & opts) {
    // per-utterance context lookup from reconstructed conversations
    std::map<std::string, std::optional<ContextTurn>> context_of;
    if (opts.use_context) {
        for (const auto & conv : reconstruct_conversations(records)) {
            for (int i = 0; i < static_cast<int>(conv.turns.size()); ++i) {
                context_of[conv.turns[static_cast<size_t>(i)].utt_id] = previous_turn(conv, i);
            }
        }
    }

    std::vector<TrainItem> items;
    items.reserve(records.size());
    for (const auto & rec : records) {
        auto wave_it = store.waves.find(rec.audio_ref);
        if (wave_it == store.waves.end()) {
            throw std::runtime_error("missing waveform for utt '" + rec.utt_id + "'");
        }
        MelProfile profile = opts.mel;
        profile.sample_rate = store.sample_rate;
        const MelFeatures mel = compute_log_mel(wave_it->second, store.sample_rate, profile);

        TrainItem item;
        item.utt_id = rec.utt_id;
        item.language = rec.language;
        item.reference = rec.text;
        item.enc = model.encoder.encode(mel);
        if (opts.use_context) {
            const auto & ctx = context_of[rec.utt_id];
            const ContextPrompt prompt = build_context_prompt(ctx, rec.speaker_id);
            std::tie(item.prompt_pre, item.prompt_post) =
                split_prompt_at_marker(model.lm.tok, prompt);
            item.context_tokens = model.lm.tok.tokenize(context_text_of(ctx));
        } else {
            item.prompt_post = model.lm.tok.tokenize(opts.plain_prompt);
        }
        item.target = model.lm.tok.tokenize(rec.text);
        item.target.push_back(Tokenizer::kEos);
        items.push_back(std::move(item));
    }
    return items;
}

DecodeResult decode_manifest(SlmModel & model, const std::vector<UtteranceRecord> & records,
                             const WaveformStore & store, const DecodeOptions & opts) {
    DecodeResult result;
    // chronological order within dialogues so chained context is available
    auto convs = reconstruct_conversations(records);
    std::map<std::string, std::string> decoded;
    for (const auto & conv : convs) {
        for (int i = 0; i < static_cast<int>(conv.turns.size()); ++i) {
            const auto & rec = conv.turns[static_cast<size_t>(i)];
            try {
                auto wave_it = store.waves.find(rec.audio_ref);
                if (wave_it == store.waves.end()) {
                    throw std::runtime_error("missing waveform");
                }
                MelProfile profile = opts.mel;
                profile.sample_rate = store.sample_rate;
                const MelFeatures mel =
                    compute_log_mel(wave_it->second, store.sample_rate, profile);
                const EncoderOutput enc = model.encoder.encode(mel);
                SpeechEmbeds speech = model.projector.project(enc);

                std::vector<int> pre, post;
                if (opts.use_context) {
                    std::optional<ContextTurn> ctx = previous_turn(conv, i);
                    if (ctx && opts.context_from_hyps) {
                        const auto & prev = conv.turns[static_cast<size_t>(i - 1)];
                        ctx->text = decoded.count(prev.utt_id) ? decoded[prev.utt_id] : "";
                    }
                    const ContextPrompt prompt = build_context_prompt(ctx, rec.speaker_id);
                    std::tie(pre, post) = split_prompt_at_marker(model.lm.tok, prompt);
                } else {
                    post = model.lm.tok.tokenize(opts.plain_prompt);
                }
                InputSequence seq = model.lm.build_spliced_sequence(pre, speech, post, nullptr);
                const auto ids = model.lm.greedy_decode_ids(seq, opts.max_len);
                const std::string text = model.lm.tok.detokenize(ids);
                decoded[rec.utt_id] = text;
                result.hyps[rec.utt_id] = text;
            } catch (const std::exception & e) {
                result.failures.push_back(rec.utt_id + ": " + e.what());
            }
        }
    }
    return result;
}

} // namespace slm
