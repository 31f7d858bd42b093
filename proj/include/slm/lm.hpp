#pragma once

#include "slm/mat.hpp"
#include "slm/nn.hpp"
#include "slm/projector.hpp"

#include <string>
#include <vector>

namespace slm {

// Character-level tokenizer with PAD/BOS/EOS/UNK specials. Out-of-alphabet
// characters map to UNK with a warning.
struct Tokenizer {
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    std::string alphabet;

    explicit Tokenizer(std::string alpha = default_alphabet());

    static std::string default_alphabet(); // printable ASCII

    int vocab_size() const { return 4 + static_cast<int>(alphabet.size()); }
    std::vector<int> tokenize(const std::string & text) const;
    std::string detokenize(const std::vector<int> & ids) const;
};

struct LmConfig {
    int d_llm = 64;
    int n_layers = 4;
    int n_heads = 4;
    int max_seq = 512;
    std::string alphabet = Tokenizer::default_alphabet();
    uint64_t seed = 0;
};

struct LoraConfig {
    int r = 8;
    double alpha = 32.0;
    std::vector<std::string> targets = {"q_proj", "v_proj"};
    double dropout = 0.0;

    void validate() const;
};

inline constexpr int kIgnoreLabel = -1;

// Concatenated speech-embedding + prompt-token + target-token sequence with
// a supervision mask. Spans: speech [speech_begin, speech_end), prompt
// [speech_end, prompt_end), target [prompt_end, L). label_ids[i] is the token
// the model must predict at position i from strictly preceding positions;
// speech and prompt positions hold kIgnoreLabel.
struct InputSequence {
    Mat embeds; // [L x d_llm]
    std::vector<int> label_ids;
    int speech_begin = 0;
    int speech_end = 0;
    int prompt_end = 0;

    int length() const { return embeds.rows; }
    int supervised_positions() const {
        int n = 0;
        for (int id : label_ids) {
            n += (id != kIgnoreLabel);
        }
        return n;
    }
};

struct TransformerBlock {
    LayerNorm ln1;
    MultiHeadAttention attn;
    LayerNorm ln2;
    FeedForward ffn;
};

// Tiny decoder-only pre-norm transformer. Base weights stay frozen in every
// training regime; adaptation happens through LoRA factors only.
struct Lm {
    LmConfig cfg;
    Tokenizer tok;
    Param tok_emb; // [V x d]
    Param pos_emb; // [max_seq x d]
    std::vector<TransformerBlock> blocks;
    LayerNorm ln_f;
    Linear unembed; // d -> V
    bool lora_active = false;

    explicit Lm(const LmConfig & config);

    Mat embed_tokens(const std::vector<int> & ids) const;

    // Standard order: speech, then prompt, then (at training time) target.
    InputSequence build_input_sequence(const SpeechEmbeds & speech,
                                       const std::vector<int> & prompt,
                                       const std::vector<int> * target) const;
    // Template-placeholder order: prompt split around the audio marker, with
    // speech embeds spliced in between.
    InputSequence build_spliced_sequence(const std::vector<int> & prompt_pre,
                                         const SpeechEmbeds & speech,
                                         const std::vector<int> & prompt_post,
                                         const std::vector<int> * target) const;

    Mat forward(const Mat & embeds); // logits [L x V]
    Mat backward(const Mat & d_logits); // d(input embeds)

    // Mean cross-entropy over supervised positions. When d_speech is given it
    // receives dL/d(speech embeds) and grads accumulate into LoRA params.
    double lm_loss(const InputSequence & seq, Mat * d_speech);

    void lora_inject(const LoraConfig & lora);
    void lora_merge();
    void set_train(bool on); // enables LoRA dropout during training steps

    std::vector<int> greedy_decode_ids(const InputSequence & seq, int max_len);
    std::string greedy_decode(const SpeechEmbeds & speech, const std::vector<int> & prompt,
                              int max_len);

    ParamList base_params();
    ParamList lora_params();
    uint64_t base_checksum();
};

} // namespace slm
