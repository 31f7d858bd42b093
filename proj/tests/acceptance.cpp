// Acceptance gate: runs every criterion and prints one PASS/FAIL line each.
// Exit status is nonzero if any hard criterion fails.

#include "slm/config.hpp"
#include "slm/evaluator.hpp"
#include "slm/model.hpp"
#include "slm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

using namespace slm;

namespace {

int g_failures = 0;

void report(int number, const std::string & name, bool pass, const std::string & detail = "") {
    std::printf("%s criterion %d: %s%s%s\n", pass ? "PASS" : "FAIL", number, name.c_str(),
                detail.empty() ? "" : " — ", detail.c_str());
    if (!pass) {
        g_failures++;
    }
    std::fflush(stdout);
}

EncoderOutput random_enc(int frames, int d_enc, uint64_t seed) {
    EncoderOutput out;
    out.d_enc = d_enc;
    out.frames = Mat(frames, d_enc);
    auto rng = make_rng(seed);
    std::normal_distribution<double> dist(0.0, 0.5);
    for (auto & v : out.frames.data) {
        v = dist(rng);
    }
    return out;
}

ModelConfig small_model(uint64_t seed = 0) {
    ModelConfig cfg;
    cfg.encoder.d_enc = 16;
    cfg.encoder.n_layers = 2;
    cfg.encoder.n_mels = 24;
    cfg.encoder.seed = seed + 1;
    cfg.projector.variant = ProjectorVariant::linear;
    cfg.projector.d_enc = 16;
    cfg.projector.d_llm = 64;
    cfg.projector.downsample_factor = 2;
    cfg.projector.seed = seed + 2;
    cfg.lm.d_llm = 64;
    cfg.lm.n_layers = 2;
    cfg.lm.n_heads = 4;
    cfg.lm.max_seq = 256;
    cfg.lm.alphabet = "abcdeTrnsi: "; // corpus symbols + plain-prompt characters
    cfg.lm.seed = seed + 3;
    cfg.contrastive_seed = seed + 4;
    return cfg;
}

std::pair<std::vector<UtteranceRecord>, WaveformStore> small_corpus(int dialogues, int turns,
                                                                    uint64_t seed,
                                                                    double carryover = 0.0,
                                                                    double noise = 0.0) {
    SyntheticCorpusSpec spec;
    spec.n_dialogues = dialogues;
    spec.turns_per_dialogue = turns;
    spec.vocabulary = {"a", "b", "c", "d", "e"};
    spec.min_symbols_per_turn = 1;
    spec.max_symbols_per_turn = 3;
    spec.seed = seed;
    spec.context_carryover = carryover;
    spec.noise_level = noise;
    return generate_synthetic_corpus(spec);
}

std::vector<TrainItem> make_items(SlmModel & model, const std::vector<UtteranceRecord> & records,
                                  const WaveformStore & store, bool use_context) {
    PipelineOptions opts;
    opts.use_context = use_context;
    opts.mel.n_mels = model.cfg.encoder.n_mels;
    return prepare_items(model, records, store, opts);
}

// ------------------------------------------------------------------ criteria

void criterion1_shape_laws() {
    bool pass = true;
    ProjectorConfig lin;
    lin.variant = ProjectorVariant::linear;
    lin.d_enc = 8;
    lin.d_llm = 8;
    lin.downsample_factor = 4;
    Projector linear(lin);
    auto out = linear.project(random_enc(1280, 8, 1));
    pass = pass && out.embeds.rows == 320;

    ProjectorConfig qf;
    qf.variant = ProjectorVariant::qformer;
    qf.d_enc = 8;
    qf.d_llm = 8;
    qf.qformer_query_len = 64;
    qf.qformer_input_len = 1280;
    qf.qformer_layers = 2;
    qf.qformer_heads = 2;
    Projector qformer(qf);
    for (int frames : {16, 100, 777, 1280}) {
        pass = pass && qformer.project(random_enc(frames, 8, frames)).embeds.rows == 64;
    }
    report(1, "shape laws (linear 1280/4 -> 320; qformer -> 64 for any length)", pass);
}

void criterion2_freeze_contract() {
    bool pass = true;
    std::string detail;
    auto [records, store] = small_corpus(4, 2, 11);
    for (auto regime : {Regime::stage1_projector_only, Regime::stage2_projector_plus_lora,
                        Regime::joint}) {
        SlmModel model(small_model(20));
        auto items = make_items(model, records, store, regime == Regime::joint);

        TrainConfig cfg;
        cfg.regime = regime;
        cfg.lr = 1e-3;
        cfg.warmup_steps = 10;
        cfg.epochs = 10000; // schedule room; capped below
        cfg.batch_size = 4;
        cfg.max_steps = 300;
        cfg.seed = 7;
        if (regime != Regime::stage1_projector_only) {
            cfg.lora = LoraConfig{};
            cfg.lora->r = 2;
            cfg.lora->alpha = 4;
        }
        if (regime == Regime::joint) {
            cfg.lambda_contrastive = 0.2;
            cfg.use_context = true;
        }

        Trainer trainer(model, cfg);
        trainer.prepare(); // injects LoRA; snapshot checksums after that
        const uint64_t enc0 = model.encoder.checksum();
        const uint64_t lm0 = model.lm.base_checksum();
        const uint64_t proj0 = model.projector.checksum();
        const uint64_t con0 = model.con_head.checksum();
        const uint64_t lora0 = params_checksum(model.lm.lora_params());

        auto log = trainer.train_steps(items, 300);

        const bool frozen_ok = freeze_check(enc0, model.encoder.checksum()) &&
                               freeze_check(lm0, model.lm.base_checksum());
        const bool proj_moved = proj0 != model.projector.checksum();
        bool set_ok = proj_moved;
        if (regime == Regime::stage1_projector_only) {
            set_ok = set_ok && model.lm.lora_params().empty() &&
                     con0 == model.con_head.checksum();
        } else {
            set_ok = set_ok && lora0 != params_checksum(model.lm.lora_params());
        }
        if (regime == Regime::joint) {
            set_ok = set_ok && con0 != model.con_head.checksum();
        }
        if (!(frozen_ok && set_ok && log.size() == 300)) {
            pass = false;
            detail += regime_name(regime) + " violated; ";
        }
    }
    report(2, "freeze contract over 300 steps of each regime", pass, detail);
}

void criterion3_lora_identity_merge() {
    LmConfig cfg;
    cfg.d_llm = 24;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.seed = 9;
    Lm lm(cfg);

    auto sample_input = [&](uint64_t seed) {
        SpeechEmbeds s;
        s.embeds = random_enc(6, 24, seed).frames;
        return lm.build_input_sequence(s, lm.tok.tokenize("ab"), nullptr).embeds;
    };

    Mat before = lm.forward(sample_input(1));
    LoraConfig lora;
    lora.r = 4;
    lora.alpha = 8;
    lora.targets = {"q_proj", "k_proj", "v_proj", "o_proj", "ffn"};
    lm.lora_inject(lora);
    const bool identity = lm.forward(sample_input(1)).data == before.data;

    auto rng = make_rng(77);
    std::normal_distribution<double> dist(0.0, 0.05);
    for (Param * p : lm.lora_params()) {
        for (auto & v : p->v.data) {
            v = dist(rng);
        }
    }
    std::vector<Mat> adapted;
    for (int t = 0; t < 10; t++) {
        adapted.push_back(lm.forward(sample_input(100 + t)));
    }
    lm.lora_merge();
    double max_abs = 0;
    for (int t = 0; t < 10; t++) {
        Mat merged = lm.forward(sample_input(100 + t));
        for (size_t i = 0; i < merged.size(); i++) {
            max_abs = std::max(max_abs, std::abs(merged.data[i] - adapted[t].data[i]));
        }
    }
    std::ostringstream detail;
    detail << "merge max-abs diff " << max_abs;
    report(3, "LoRA identity at injection and merge equivalence (< 1e-5)",
           identity && max_abs < 1e-5, detail.str());
}

// shared FD helper: loss must be re-evaluatable after any param perturbation
bool fd_check(ParamList params, const std::function<double()> & loss,
              const std::function<void()> & backward, double & worst) {
    for (Param * p : params) {
        p->zero_grad();
    }
    backward();
    const double eps = 1e-5;
    std::mt19937_64 pick(5);
    bool ok = true;
    for (Param * p : params) {
        std::uniform_int_distribution<size_t> idx(0, p->v.size() - 1);
        const int n_checks = std::min<int>(6, static_cast<int>(p->v.size()));
        for (int c = 0; c < n_checks; c++) {
            const size_t i = idx(pick);
            const double orig = p->v.data[i];
            p->v.data[i] = orig + eps;
            const double up = loss();
            p->v.data[i] = orig - eps;
            const double dn = loss();
            p->v.data[i] = orig;
            const double fd = (up - dn) / (2 * eps);
            const double an = p->g.data[i];
            const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
            worst = std::max(worst, rel);
            ok = ok && rel < 1e-4;
        }
    }
    return ok;
}

void criterion4_gradient_checks() {
    bool pass = true;
    double worst = 0.0;

    // projector variants, weighted-sum loss
    for (auto variant :
         {ProjectorVariant::linear, ProjectorVariant::conv_linear, ProjectorVariant::qformer}) {
        ProjectorConfig cfg;
        cfg.variant = variant;
        cfg.d_enc = 6;
        cfg.d_llm = 8;
        cfg.downsample_factor = 2;
        cfg.qformer_query_len = 3;
        cfg.qformer_input_len = 16;
        cfg.qformer_layers = 1;
        cfg.qformer_heads = 2;
        cfg.seed = 31;
        Projector proj(cfg);
        auto enc = random_enc(12, 6, 3);
        Mat probe = proj.project(enc).embeds;
        Mat d_out = random_enc(probe.rows, probe.cols, 4).frames;
        auto loss = [&] {
            Mat out = proj.project(enc).embeds;
            double s = 0;
            for (size_t i = 0; i < out.size(); i++) {
                s += out.data[i] * d_out.data[i];
            }
            return s;
        };
        pass = fd_check(proj.params(), loss,
                        [&] {
                            proj.project(enc);
                            proj.backward(d_out);
                        },
                        worst) &&
               pass;
    }

    // LoRA factors through the LM cross-entropy
    LmConfig lm_cfg;
    lm_cfg.d_llm = 16;
    lm_cfg.n_layers = 1;
    lm_cfg.n_heads = 2;
    lm_cfg.seed = 32;
    Lm lm(lm_cfg);
    LoraConfig lora;
    lora.r = 2;
    lora.alpha = 4;
    lora.targets = {"q_proj", "v_proj"};
    lm.lora_inject(lora);
    auto lrng = make_rng(33);
    std::normal_distribution<double> ldist(0.0, 0.05);
    for (Param * p : lm.lora_params()) {
        for (auto & v : p->v.data) {
            v = ldist(lrng);
        }
    }
    SpeechEmbeds speech;
    speech.embeds = random_enc(3, 16, 34).frames;
    std::vector<int> target = lm.tok.tokenize("ab");
    target.push_back(Tokenizer::kEos);
    auto seq = lm.build_input_sequence(speech, lm.tok.tokenize("c"), &target);
    pass = fd_check(lm.lora_params(), [&] { return lm.lm_loss(seq, nullptr); },
                    [&] { lm.lm_loss(seq, &speech.embeds); }, worst) &&
           pass;

    // contrastive head through the InfoNCE loss
    ContrastiveHead head(8, 35);
    Mat frames_a = random_enc(5, 8, 36).frames;
    Mat frames_b = random_enc(4, 8, 37).frames;
    Mat ctx_a = random_enc(3, 8, 38).frames;
    Mat ctx_b = random_enc(2, 8, 39).frames;
    auto batch_loss = [&](Mat * ds, Mat * dc, PoolCache caches[4]) {
        ContrastiveBatch batch;
        batch.temperature = 0.1;
        batch.speech_reps = Mat(2, 8);
        batch.context_reps = Mat(2, 8);
        Mat zs_a = head.embed_speech(frames_a, caches[0]);
        Mat zs_b = head.embed_speech(frames_b, caches[1]);
        Mat zc_a = head.embed_context(ctx_a, caches[2]);
        Mat zc_b = head.embed_context(ctx_b, caches[3]);
        for (int j = 0; j < 8; j++) {
            batch.speech_reps(0, j) = zs_a(0, j);
            batch.speech_reps(1, j) = zs_b(0, j);
            batch.context_reps(0, j) = zc_a(0, j);
            batch.context_reps(1, j) = zc_b(0, j);
        }
        return contrastive_loss(batch, ds, dc);
    };
    auto con_backward = [&] {
        PoolCache caches[4];
        Mat ds, dc;
        batch_loss(&ds, &dc, caches);
        Mat row(1, 8);
        for (int j = 0; j < 8; j++) {
            row(0, j) = ds(0, j);
        }
        head.backward_speech(row, caches[0], nullptr);
        for (int j = 0; j < 8; j++) {
            row(0, j) = ds(1, j);
        }
        head.backward_speech(row, caches[1], nullptr);
        for (int j = 0; j < 8; j++) {
            row(0, j) = dc(0, j);
        }
        head.backward_context(row, caches[2]);
        for (int j = 0; j < 8; j++) {
            row(0, j) = dc(1, j);
        }
        head.backward_context(row, caches[3]);
    };
    auto con_loss = [&] {
        PoolCache caches[4];
        return batch_loss(nullptr, nullptr, caches);
    };
    pass = fd_check(head.params(), con_loss, con_backward, worst) && pass;

    std::ostringstream detail;
    detail << "worst relative error " << worst;
    report(4, "gradient checks vs central finite differences (< 1e-4)", pass, detail.str());
}

void criterion5_contrastive_oracle() {
    // N = 1: exactly zero
    ContrastiveBatch single;
    single.speech_reps = Mat(1, 4);
    single.speech_reps(0, 0) = 1.0;
    single.context_reps = single.speech_reps;
    single.temperature = 0.07;
    const bool n1_zero = contrastive_loss(single) == 0.0;

    // orthonormal aligned batch, closed form
    const int n = 4;
    Mat reps(n, n);
    for (int i = 0; i < n; i++) {
        reps(i, i) = 1.0;
    }
    ContrastiveBatch batch{reps, reps, 1.0};
    const double got = contrastive_loss(batch);
    const double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + (n - 1)));
    const bool closed_form = std::abs(got - expect) < 1e-9;

    // permutation invariance (exact)
    Mat s = random_enc(4, 6, 51).frames;
    Mat c = random_enc(4, 6, 52).frames;
    const double base = contrastive_loss({s, c, 0.07});
    const int perm[] = {2, 0, 3, 1};
    Mat sp(4, 6), cp(4, 6);
    for (int i = 0; i < 4; i++) {
        for (int j = 0; j < 6; j++) {
            sp(i, j) = s(perm[i], j);
            cp(i, j) = c(perm[i], j);
        }
    }
    const double permuted = contrastive_loss({sp, cp, 0.07});
    const bool invariant = std::abs(base - permuted) < 1e-12;

    std::ostringstream detail;
    detail << "closed-form |diff| " << std::abs(got - expect);
    report(5, "contrastive oracle (N=1 zero; closed form 1e-9; permutation invariance)",
           n1_zero && closed_form && invariant, detail.str());
}

struct OverfitResult {
    double final_loss = 0.0;
    double wer = 0.0;
    int steps = 0;
};

OverfitResult overfit_run(uint64_t seed) {
    auto [records, store] = small_corpus(16, 2, 61); // 32 utterances
    SlmModel model(small_model(60));
    auto items = make_items(model, records, store, false);

    TrainConfig cfg;
    cfg.regime = Regime::joint;
    cfg.lr = 5e-3;
    cfg.warmup_steps = 20;
    cfg.epochs = 10000;
    cfg.batch_size = 8;
    cfg.max_steps = 300;
    cfg.seed = seed;
    cfg.lora = LoraConfig{};
    cfg.lora->r = 8;
    cfg.lora->alpha = 16;
    cfg.lora->targets = {"q_proj", "v_proj", "o_proj", "ffn"};
    Trainer trainer(model, cfg);
    trainer.prepare();
    auto log = trainer.train(items);

    DecodeOptions opts;
    opts.mel.n_mels = model.cfg.encoder.n_mels;
    opts.max_len = 8;
    auto decoded = decode_manifest(model, records, store, opts);

    std::vector<RefEntry> refs;
    for (const auto & r : records) {
        refs.push_back({r.utt_id, r.language, r.text});
    }
    WerReport rep = score(refs, decoded.hyps);

    OverfitResult result;
    result.final_loss = log.empty() ? 1e9 : log.back().loss;
    result.wer = rep.macro_wer;
    result.steps = static_cast<int>(log.size());
    return result;
}

void criterion6_overfit() {
    OverfitResult a = overfit_run(62);
    OverfitResult b = overfit_run(62); // determinism under the same seed
    const bool deterministic = a.final_loss == b.final_loss && a.wer == b.wer;
    const bool pass = a.final_loss < 0.05 && a.wer <= 0.05 && a.steps <= 300 && deterministic;
    std::ostringstream detail;
    detail << "loss " << a.final_loss << " after " << a.steps << " steps, train WER "
           << 100.0 * a.wer << "%, deterministic=" << (deterministic ? "yes" : "no");
    report(6, "overfit convergence (joint, 32 utts: loss < 0.05, WER <= 5% in 300 steps)",
           pass, detail.str());
}

long long oracle_levenshtein(const std::vector<std::string> & ref,
                             const std::vector<std::string> & hyp) {
    const size_t n = ref.size(), m = hyp.size();
    std::vector<long long> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; j++) {
        prev[j] = static_cast<long long>(j);
    }
    for (size_t i = 1; i <= n; i++) {
        cur[0] = static_cast<long long>(i);
        for (size_t j = 1; j <= m; j++) {
            cur[j] = std::min({prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1), prev[j] + 1,
                               cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

void criterion7_wer_oracle() {
    EditCounts fixture = edit_ops({"a", "b", "c"}, {"a", "x", "c", "d"});
    bool pass = fixture.total() == 2 && fixture.substitutions == 1 && fixture.insertions == 1;

    std::mt19937_64 rng(71);
    std::uniform_int_distribution<int> len(0, 14), tok(0, 4);
    auto random_tokens = [&] {
        std::vector<std::string> t(len(rng));
        for (auto & s : t) {
            s = std::string(1, static_cast<char>('a' + tok(rng)));
        }
        return t;
    };
    for (int trial = 0; trial < 1000 && pass; trial++) {
        auto ref = random_tokens();
        auto hyp = random_tokens();
        pass = edit_ops(ref, hyp).total() == oracle_levenshtein(ref, hyp);
    }
    report(7, "WER oracle equivalence (1000 random pairs; fixture a b c / a x c d = 2/3)", pass);
}

void criterion8_prompt_byte_exactness() {
    auto rendered = build_context_prompt(ContextTurn{Speaker::O1, "hi"}, Speaker::O2).rendered;
    bool pass =
        rendered ==
        "O1: hi. Given the conversation history above between two speakers (O1 and O2), "
        "please transcribe the speech below. Speech: [AUDIO]. Transcription:";

    auto first = build_context_prompt(std::nullopt, Speaker::O1);
    pass = pass && first.context_text.empty();

    // turn-k context equals turn k-1's reference after reconstruction from a
    // shuffled manifest
    auto [records, store] = small_corpus(3, 4, 81);
    auto shuffled = records;
    std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(82));
    auto convs = reconstruct_conversations(shuffled);
    for (const auto & conv : convs) {
        for (size_t k = 1; k < conv.turns.size(); k++) {
            auto prev = previous_turn(conv, static_cast<int>(k));
            pass = pass && prev.has_value() && prev->text == conv.turns[k - 1].text;
        }
    }
    report(8, "prompt byte-exactness and context reconstruction from shuffled manifest", pass);
}

void criterion9_schedule() {
    TrainConfig cfg;
    cfg.lr = 1e-4;
    cfg.warmup_steps = 1000;
    const int total = 2000;
    bool pass = lr_schedule(0, cfg, total) == 0.0;
    pass = pass && std::abs(lr_schedule(500, cfg, total) - 5e-5) < 1e-18;
    pass = pass && std::abs(lr_schedule(1000, cfg, total) - 1e-4) < 1e-18;
    // linear decay thereafter and continuity at the boundary
    pass = pass && std::abs(lr_schedule(1500, cfg, total) - 5e-5) < 1e-18;
    pass = pass && lr_schedule(2000, cfg, total) == 0.0;
    const double just_after = lr_schedule(1001, cfg, total);
    pass = pass && std::abs(just_after - 1e-4) < 1.1e-7;
    report(9, "lr schedule (lr(0)=0, lr(500)=5e-5, lr(1000)=1e-4, linear decay)", pass);
}

double trend_run(bool use_context, const std::vector<UtteranceRecord> & records,
                 const WaveformStore & store) {
    SlmModel model(small_model(90));
    auto items = make_items(model, records, store, use_context);
    TrainConfig cfg;
    cfg.regime = Regime::joint;
    cfg.lr = 5e-3;
    cfg.warmup_steps = 20;
    cfg.epochs = 10000;
    cfg.batch_size = 8;
    cfg.max_steps = 250;
    cfg.seed = 91;
    cfg.lora = LoraConfig{};
    cfg.lora->r = 8;
    cfg.lora->alpha = 16;
    cfg.lora->targets = {"q_proj", "v_proj", "o_proj", "ffn"};
    cfg.use_context = use_context;
    if (use_context) {
        cfg.lambda_contrastive = 0.2;
    }
    Trainer trainer(model, cfg);
    trainer.prepare();
    trainer.train(items);

    DecodeOptions opts;
    opts.use_context = use_context;
    opts.mel.n_mels = model.cfg.encoder.n_mels;
    opts.max_len = 8;
    auto decoded = decode_manifest(model, records, store, opts);
    std::vector<RefEntry> refs;
    for (const auto & r : records) {
        refs.push_back({r.utt_id, r.language, r.text});
    }
    return score(refs, decoded.hyps).macro_wer;
}

void criterion10_context_trend() {
    // noisy corpus where the previous turn is statistically predictive
    auto [records, store] = small_corpus(8, 4, 101, /*carryover=*/0.9, /*noise=*/1.8);
    const double wer_ctx = trend_run(true, records, store);
    const double wer_plain = trend_run(false, records, store);
    std::ostringstream detail;
    detail << "context WER " << 100.0 * wer_ctx << "% vs no-context " << 100.0 * wer_plain
           << "% at equal steps (seed 91/101); trend "
           << (wer_ctx <= wer_plain ? "matches" : "does not match")
           << " — soft criterion, reported not gated";
    report(10, "qualitative context trend (soft)", true, detail.str());
}

} // namespace

int main() {
    criterion1_shape_laws();
    criterion2_freeze_contract();
    criterion3_lora_identity_merge();
    criterion4_gradient_checks();
    criterion5_contrastive_oracle();
    criterion6_overfit();
    criterion7_wer_oracle();
    criterion8_prompt_byte_exactness();
    criterion9_schedule();
    criterion10_context_trend();

    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
