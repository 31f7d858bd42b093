#include "slm/lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace slm {

// ------------------------------------------------------------- Tokenizer

Tokenizer::Tokenizer(std::string alpha) : alphabet(std::move(alpha)) {}

std::string Tokenizer::default_alphabet() {
    std::string s;
    for (char c = 32; c != 127; ++c) {
        s += c;
    }
    return s;
}

std::vector<int> Tokenizer::tokenize(const std::string & text) const {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (char c : text) {
        const auto pos = alphabet.find(c);
        if (pos == std::string::npos) {
            std::fprintf(stderr, "warning: tokenizer: character 0x%02x not in alphabet, using UNK\n",
                         static_cast<unsigned char>(c));
            ids.push_back(kUnk);
        } else {
            ids.push_back(4 + static_cast<int>(pos));
        }
    }
    return ids;
}

std::string Tokenizer::detokenize(const std::vector<int> & ids) const {
    std::string s;
    for (int id : ids) {
        if (id >= 4 && id < vocab_size()) {
            s += alphabet[static_cast<size_t>(id - 4)];
        }
        // specials produce no text
    }
    return s;
}

void LoraConfig::validate() const {
    if (r < 1) {
        throw std::invalid_argument("lora: rank must be >= 1");
    }
    if (alpha <= 0.0) {
        throw std::invalid_argument("lora: alpha must be > 0");
    }
    if (targets.empty()) {
        throw std::invalid_argument("lora: target set must be non-empty");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
        throw std::invalid_argument("lora: dropout must be in [0, 1)");
    }
    for (const auto & target : targets) {
        if (target != "q_proj" && target != "k_proj" && target != "v_proj" &&
            target != "o_proj" && target != "ffn") {
            throw std::invalid_argument("lora: unknown target '" + target +
                                        "' (valid: q_proj, k_proj, v_proj, o_proj, ffn)");
        }
    }
}

// -------------------------------------------------------------------- Lm

Lm::Lm(const LmConfig & config) : cfg(config), tok(config.alphabet) {
    if (cfg.d_llm % cfg.n_heads != 0) {
        throw std::invalid_argument("lm: d_llm must be divisible by n_heads");
    }
    auto rng = make_rng(cfg.seed);
    const int v = tok.vocab_size();
    tok_emb = Param("lm.tok_emb", v, cfg.d_llm);
    pos_emb = Param("lm.pos_emb", cfg.max_seq, cfg.d_llm);
    normal_init(tok_emb.v, rng, 0.02);
    normal_init(pos_emb.v, rng, 0.02);
    // scale linear inits with width: the base stays frozen, so it must pass
    // signal at full strength or the trainable parts cannot shape the logits
    const double sigma = 1.0 / std::sqrt(static_cast<double>(cfg.d_llm));
    blocks.reserve(cfg.n_layers);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string base = "lm.layer" + std::to_string(l);
        TransformerBlock b;
        b.ln1 = LayerNorm(base + ".ln1", cfg.d_llm);
        b.attn = MultiHeadAttention(base + ".attn", cfg.d_llm, cfg.n_heads);
        b.attn.init(rng, sigma);
        b.ln2 = LayerNorm(base + ".ln2", cfg.d_llm);
        b.ffn = FeedForward(base + ".ffn", cfg.d_llm, 4 * cfg.d_llm);
        b.ffn.init(rng, sigma);
        blocks.push_back(std::move(b));
    }
    ln_f = LayerNorm("lm.ln_f", cfg.d_llm);
    unembed = Linear("lm.unembed", cfg.d_llm, v, /*with_bias=*/false);
    unembed.init(rng, sigma);
}

Mat Lm::embed_tokens(const std::vector<int> & ids) const {
    Mat e(static_cast<int>(ids.size()), cfg.d_llm);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= tok.vocab_size()) {
            throw std::invalid_argument("embed_tokens: token id out of range");
        }
        const double * src = tok_emb.v.row_ptr(ids[i]);
        std::copy(src, src + cfg.d_llm, e.row_ptr(static_cast<int>(i)));
    }
    return e;
}

InputSequence Lm::build_spliced_sequence(const std::vector<int> & prompt_pre,
                                         const SpeechEmbeds & speech,
                                         const std::vector<int> & prompt_post,
                                         const std::vector<int> * target) const {
    if (speech.embeds.rows < 1) {
        throw std::invalid_argument("build_input_sequence: speech must be non-empty");
    }
    const int s = speech.embeds.rows;
    const int p_pre = static_cast<int>(prompt_pre.size());
    const int p_post = static_cast<int>(prompt_post.size());
    const int t_len = target ? static_cast<int>(target->size()) : 0;
    const int total = p_pre + s + p_post + t_len;
    if (total > cfg.max_seq) {
        throw std::invalid_argument("build_input_sequence: sequence too long (" +
                                    std::to_string(total) + " > max_seq " +
                                    std::to_string(cfg.max_seq) + ")");
    }
    InputSequence seq;
    seq.embeds = Mat(total, cfg.d_llm);
    seq.label_ids.assign(total, kIgnoreLabel);
    seq.speech_begin = p_pre;
    seq.speech_end = p_pre + s;
    seq.prompt_end = p_pre + s + p_post;

    int row = 0;
    auto put_tokens = [&](const std::vector<int> & ids, bool supervised) {
        for (int id : ids) {
            const double * src = tok_emb.v.row_ptr(id);
            double * dst = seq.embeds.row_ptr(row);
            std::copy(src, src + cfg.d_llm, dst);
            if (supervised) {
                seq.label_ids[row] = id;
            }
            ++row;
        }
    };
    put_tokens(prompt_pre, false);
    for (int i = 0; i < s; ++i) {
        const double * src = speech.embeds.row_ptr(i);
        std::copy(src, src + cfg.d_llm, seq.embeds.row_ptr(row++));
    }
    put_tokens(prompt_post, false);
    if (target) {
        put_tokens(*target, true);
    }
    // absolute position embeddings over the whole concatenation
    for (int i = 0; i < total; ++i) {
        const double * pe = pos_emb.v.row_ptr(i);
        double * dst = seq.embeds.row_ptr(i);
        for (int j = 0; j < cfg.d_llm; ++j) {
            dst[j] += pe[j];
        }
    }
    return seq;
}

InputSequence Lm::build_input_sequence(const SpeechEmbeds & speech,
                                       const std::vector<int> & prompt,
                                       const std::vector<int> * target) const {
    return build_spliced_sequence({}, speech, prompt, target);
}

Mat Lm::forward(const Mat & embeds) {
    Mat x = embeds;
    for (auto & b : blocks) {
        Mat u = b.ln1.forward(x);
        Mat a = b.attn.forward(u, u, /*causal=*/true);
        for (size_t i = 0; i < x.data.size(); ++i) {
            x.data[i] += a.data[i];
        }
        Mat f = b.ffn.forward(b.ln2.forward(x));
        for (size_t i = 0; i < x.data.size(); ++i) {
            x.data[i] += f.data[i];
        }
    }
    return unembed.forward(ln_f.forward(x));
}

Mat Lm::backward(const Mat & d_logits) {
    Mat dx = ln_f.backward(unembed.backward(d_logits));
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
        Mat du = it->ffn.backward(dx);
        Mat dres = it->ln2.backward(du);
        for (size_t i = 0; i < dx.data.size(); ++i) {
            dx.data[i] += dres.data[i];
        }
        auto [dq, dkv] = it->attn.backward(dx);
        for (size_t i = 0; i < dq.data.size(); ++i) {
            dq.data[i] += dkv.data[i];
        }
        Mat dres2 = it->ln1.backward(dq);
        for (size_t i = 0; i < dx.data.size(); ++i) {
            dx.data[i] += dres2.data[i];
        }
    }
    return dx;
}

double Lm::lm_loss(const InputSequence & seq, Mat * d_speech) {
    const int n_sup = seq.supervised_positions();
    if (n_sup < 1) {
        throw std::invalid_argument("lm_loss: sequence has no supervised positions");
    }
    Mat logits = forward(seq.embeds);
    const int v = logits.cols;

    double loss = 0.0;
    Mat d_logits;
    if (d_speech) {
        d_logits = Mat(logits.rows, logits.cols);
    }
    for (int i = 0; i < seq.length(); ++i) {
        const int label = seq.label_ids[i];
        if (label == kIgnoreLabel) {
            continue;
        }
        // label at position i is predicted from the logits at position i-1
        const double * row = logits.row_ptr(i - 1);
        double mx = row[0];
        for (int j = 1; j < v; ++j) {
            mx = std::max(mx, row[j]);
        }
        double z = 0.0;
        for (int j = 0; j < v; ++j) {
            z += std::exp(row[j] - mx);
        }
        loss += -(row[label] - mx - std::log(z));
        if (d_speech) {
            double * drow = d_logits.row_ptr(i - 1);
            for (int j = 0; j < v; ++j) {
                drow[j] += std::exp(row[j] - mx) / z / n_sup;
            }
            drow[label] -= 1.0 / n_sup;
        }
    }
    loss /= n_sup;
    if (d_speech) {
        Mat d_embeds = backward(d_logits);
        *d_speech = Mat(seq.speech_end - seq.speech_begin, cfg.d_llm);
        for (int i = seq.speech_begin; i < seq.speech_end; ++i) {
            const double * src = d_embeds.row_ptr(i);
            std::copy(src, src + cfg.d_llm, d_speech->row_ptr(i - seq.speech_begin));
        }
    }
    return loss;
}

void Lm::lora_inject(const LoraConfig & lora) {
    lora.validate();
    auto rng = make_rng(derive_seed(cfg.seed, "lora"));
    for (auto & b : blocks) {
        for (const auto & target : lora.targets) {
            std::vector<Linear *> hit;
            if (target == "q_proj") {
                hit = {&b.attn.wq};
            } else if (target == "k_proj") {
                hit = {&b.attn.wk};
            } else if (target == "v_proj") {
                hit = {&b.attn.wv};
            } else if (target == "o_proj") {
                hit = {&b.attn.wo};
            } else if (target == "ffn") {
                hit = {&b.ffn.fc1, &b.ffn.fc2};
            } else {
                throw std::invalid_argument(
                    "lora: unknown target '" + target +
                    "' (valid: q_proj, k_proj, v_proj, o_proj, ffn)");
            }
            for (Linear * lin : hit) {
                lin->inject_lora(lora.r, lora.alpha, rng, lora.dropout);
            }
        }
    }
    lora_active = true;
}

void Lm::lora_merge() {
    if (!lora_active) {
        std::fprintf(stderr, "warning: lora_merge: no adapters present, nothing to merge\n");
        return;
    }
    for (auto & b : blocks) {
        b.attn.wq.merge_lora();
        b.attn.wk.merge_lora();
        b.attn.wv.merge_lora();
        b.attn.wo.merge_lora();
        b.ffn.fc1.merge_lora();
        b.ffn.fc2.merge_lora();
    }
    lora_active = false;
}

void Lm::set_train(bool on) {
    for (auto & b : blocks) {
        for (Linear * lin : {&b.attn.wq, &b.attn.wk, &b.attn.wv, &b.attn.wo,
                             &b.ffn.fc1, &b.ffn.fc2}) {
            lin->train_mode = on;
        }
    }
}

std::vector<int> Lm::greedy_decode_ids(const InputSequence & seq, int max_len) {
    if (max_len < 1) {
        throw std::invalid_argument("greedy_decode: max_len must be >= 1");
    }
    Mat embeds = seq.embeds;
    std::vector<int> generated;
    while (static_cast<int>(generated.size()) < max_len && embeds.rows < cfg.max_seq) {
        Mat logits = forward(embeds);
        const double * row = logits.row_ptr(logits.rows - 1);
        int best = 0;
        for (int j = 1; j < logits.cols; ++j) {
            if (row[j] > row[best]) {
                best = j;
            }
        }
        if (best == Tokenizer::kEos) {
            break;
        }
        generated.push_back(best);
        Mat next(embeds.rows + 1, cfg.d_llm);
        std::copy(embeds.data.begin(), embeds.data.end(), next.data.begin());
        const double * te = tok_emb.v.row_ptr(best);
        const double * pe = pos_emb.v.row_ptr(embeds.rows);
        double * dst = next.row_ptr(embeds.rows);
        for (int j = 0; j < cfg.d_llm; ++j) {
            dst[j] = te[j] + pe[j];
        }
        embeds = std::move(next);
    }
    return generated;
}

std::string Lm::greedy_decode(const SpeechEmbeds & speech, const std::vector<int> & prompt,
                              int max_len) {
    InputSequence seq = build_input_sequence(speech, prompt, nullptr);
    return tok.detokenize(greedy_decode_ids(seq, max_len));
}

ParamList Lm::base_params() {
    ParamList out;
    out.push_back(&tok_emb);
    out.push_back(&pos_emb);
    for (auto & b : blocks) {
        b.ln1.collect(out);
        b.attn.collect(out);
        b.ln2.collect(out);
        b.ffn.collect(out);
    }
    ln_f.collect(out);
    unembed.collect(out);
    return out;
}

ParamList Lm::lora_params() {
    ParamList out;
    for (auto & b : blocks) {
        b.attn.wq.collect_lora(out);
        b.attn.wk.collect_lora(out);
        b.attn.wv.collect_lora(out);
        b.attn.wo.collect_lora(out);
        b.ffn.fc1.collect_lora(out);
        b.ffn.fc2.collect_lora(out);
    }
    return out;
}

uint64_t Lm::base_checksum() {
    return params_checksum(base_params());
}

} // namespace slm
