// Command-line entry point: data prep, augmentation, training, decoding,
// scoring and report emission.

#include "slm/config.hpp"
#include "slm/evaluator.hpp"
#include "slm/model.hpp"
#include "slm/rng.hpp"
#include "slm/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace slm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

json load_config_json(const std::string & path) {
    std::string p = path;
    if (!fs::exists(p) && fs::exists(p + ".json")) {
        p += ".json";
    }
    std::ifstream in(p);
    if (!in) {
        throw std::invalid_argument("cannot open config file: " + path);
    }
    return json::parse(in);
}

RunConfig resolve_config(const std::string & config_path,
                         const std::vector<std::string> & overrides) {
    json j = config_path.empty() ? default_config_json() : load_config_json(config_path);
    merge_env_seed(j);
    for (const auto & o : overrides) {
        apply_override(j, o);
    }
    return run_config_from_json(j);
}

void write_text(const std::string & path, const std::string & text) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << text;
}

// Rebuild a model from the config snapshot stored in a checkpoint and load
// its weights.
std::pair<RunConfig, std::unique_ptr<SlmModel>> load_model(const std::string & ckpt_path) {
    Container c = load_container(ckpt_path);
    RunConfig cfg = run_config_from_json(json::parse(c.config_text));
    auto model = std::make_unique<SlmModel>(cfg.model);
    if (cfg.train.lora && cfg.train.regime != Regime::stage1_projector_only) {
        model->lm.lora_inject(*cfg.train.lora);
    }
    std::map<std::string, Mat> weights;
    for (auto & [name, mat] : c.mats) {
        if (name.rfind("w.", 0) == 0) {
            weights[name.substr(2)] = std::move(mat);
        }
    }
    model->import_weights(weights);
    return {std::move(cfg), std::move(model)};
}

int cmd_synth_data(const SyntheticCorpusSpec & spec, const std::string & out_dir) {
    auto [records, store] = generate_synthetic_corpus(spec);
    fs::create_directories(out_dir);
    write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), records);
    save_waveform_store(store, (fs::path(out_dir) / "audio").string());
    std::printf("wrote %zu utterances to %s\n", records.size(), out_dir.c_str());
    return kExitOk;
}

AugmentSpec parse_augment_ops(const std::string & ops_text, uint64_t seed) {
    AugmentSpec spec;
    spec.seed = seed;
    std::stringstream ss(ops_text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto colon = tok.find(':');
        if (colon == std::string::npos) {
            throw std::invalid_argument("augment op must be name:value, got '" + tok + "'");
        }
        const std::string name = tok.substr(0, colon);
        const double value = std::stod(tok.substr(colon + 1));
        AugmentOp::Kind kind;
        if (name == "stretch") {
            kind = AugmentOp::Kind::time_stretch;
        } else if (name == "pitch") {
            kind = AugmentOp::Kind::pitch_shift;
        } else if (name == "noise") {
            kind = AugmentOp::Kind::gaussian_noise;
        } else if (name == "clip") {
            kind = AugmentOp::Kind::clip_distortion;
        } else if (name == "speed") {
            kind = AugmentOp::Kind::speed_perturb;
        } else {
            throw std::invalid_argument("unknown augment op '" + name +
                                        "' (valid: stretch, pitch, noise, clip, speed)");
        }
        spec.ops.push_back({kind, value});
    }
    return spec;
}

int cmd_augment(const std::string & manifest, const std::string & audio_dir,
                const std::string & out_dir, const std::string & ops_text, uint64_t seed) {
    auto records = load_manifest(manifest);
    auto store = load_waveform_store(audio_dir);
    AugmentSpec base = parse_augment_ops(ops_text, seed);

    WaveformStore out_store;
    out_store.sample_rate = store.sample_rate;
    std::vector<UtteranceRecord> out_records;
    for (auto rec : records) {
        AugmentSpec spec = base;
        // per-utterance seed so parallel or reordered runs agree
        spec.seed = derive_seed(seed, rec.utt_id);
        const auto & wave = store.waves.at(rec.audio_ref);
        auto aug = augment(wave, store.sample_rate, spec);
        rec.utt_id += "_aug";
        rec.audio_ref = rec.utt_id;
        rec.end_time = rec.start_time + static_cast<double>(aug.size()) / store.sample_rate;
        out_store.waves[rec.utt_id] = std::move(aug);
        out_records.push_back(std::move(rec));
    }
    fs::create_directories(out_dir);
    write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), out_records);
    save_waveform_store(out_store, (fs::path(out_dir) / "audio").string());
    std::printf("augmented %zu utterances into %s\n", out_records.size(), out_dir.c_str());
    return kExitOk;
}

int cmd_train(const RunConfig & cfg, const std::string & manifest, const std::string & audio_dir,
              const std::string & out_dir, const std::string & init_projector) {
    if (cfg.train.regime == Regime::stage2_projector_plus_lora && init_projector.empty() &&
        !cfg.train.fresh_projector) {
        throw std::invalid_argument(
            "config error: stage2 requires --init-projector <ckpt> or train.fresh_projector");
    }
    auto records = load_manifest(manifest);
    auto store = load_waveform_store(audio_dir);

    SlmModel model(cfg.model);
    if (!init_projector.empty()) {
        load_projector_init(model, init_projector);
    }
    Trainer trainer(model, cfg.train);
    trainer.prepare(); // validates regime/config before any step

    PipelineOptions popts;
    popts.use_context = cfg.train.use_context;
    popts.plain_prompt = cfg.train.plain_prompt;
    popts.mel.n_mels = cfg.model.encoder.n_mels;
    auto items = prepare_items(model, records, store, popts);

    auto log = trainer.train(items);

    fs::create_directories(out_dir);
    const std::string ckpt = (fs::path(out_dir) / "checkpoint.slm").string();
    trainer.save_checkpoint(ckpt, cfg.canonical_text());
    write_metrics_log((fs::path(out_dir) / "metrics.jsonl").string(), log);
    write_text((fs::path(out_dir) / "config.json").string(), cfg.canonical_text());
    if (!log.empty()) {
        std::printf("trained %d steps, final loss %.6f, checkpoint %s\n", log.back().step,
                    log.back().loss, ckpt.c_str());
    }
    return kExitOk;
}

int cmd_decode(const std::string & ckpt_path, const std::string & manifest,
               const std::string & audio_dir, const std::string & out_path, bool use_context,
               bool context_from_hyps, int max_len) {
    auto [cfg, model] = load_model(ckpt_path);
    auto records = load_manifest(manifest);
    auto store = load_waveform_store(audio_dir);

    DecodeOptions opts = cfg.decode;
    if (use_context) {
        opts.use_context = true;
    }
    if (context_from_hyps) {
        opts.use_context = true;
        opts.context_from_hyps = true;
    }
    if (max_len > 0) {
        opts.max_len = max_len;
    }
    opts.plain_prompt = cfg.train.plain_prompt;
    opts.mel.n_mels = cfg.model.encoder.n_mels;

    auto result = decode_manifest(*model, records, store, opts);
    write_hypotheses(out_path, result.hyps);
    std::printf("decoded %zu utterances to %s\n", result.hyps.size(), out_path.c_str());
    if (!result.failures.empty()) {
        for (const auto & f : result.failures) {
            std::fprintf(stderr, "decode failure: %s\n", f.c_str());
        }
        std::fprintf(stderr, "%zu utterances failed\n", result.failures.size());
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_score(const std::string & manifest, const std::string & hyps_path,
              const std::string & out_prefix, const ScoreOptions & opts) {
    auto records = load_manifest(manifest);
    std::vector<RefEntry> refs;
    refs.reserve(records.size());
    for (const auto & r : records) {
        refs.push_back({r.utt_id, r.language, r.text});
    }
    auto hyps = load_hypotheses(hyps_path);
    WerReport report = score(refs, hyps, opts);
    const std::string table = wer_report_table(report);
    std::printf("%s", table.c_str());
    if (!out_prefix.empty()) {
        write_text(out_prefix + ".csv", wer_report_csv(report));
        write_text(out_prefix + ".txt", table);
    }
    return kExitOk;
}

int cmd_report(const std::string & runs_path, const std::string & out_path) {
    std::ifstream in(runs_path);
    if (!in) {
        throw std::invalid_argument("cannot open runs file: " + runs_path);
    }
    json j = json::parse(in);
    std::vector<RunMeta> runs;
    for (const auto & r : j) {
        RunMeta meta;
        meta.audio_encoder = r.value("audio_encoder", "toy_conv");
        meta.llm = r.value("llm", "toy_lm");
        meta.lora = r.value("lora", false);
        meta.projector = r.value("projector", "linear");
        meta.train_data = r.value("train_data", "");
        meta.wer = r.at("wer").get<double>();
        runs.push_back(std::move(meta));
    }
    const std::string csv = emit_report(runs);
    std::printf("%s", csv.c_str());
    if (!out_path.empty()) {
        write_text(out_path, csv);
    }
    return kExitOk;
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"speech-language-model toolkit"};
    app.require_subcommand(1);

    // synth-data
    auto * synth = app.add_subcommand("synth-data", "generate the deterministic toy corpus");
    SyntheticCorpusSpec spec;
    spec.n_dialogues = 2;
    spec.turns_per_dialogue = 4;
    std::string vocab = "abcde";
    std::string synth_out = "data";
    synth->add_option("--seed", spec.seed);
    synth->add_option("--dialogues", spec.n_dialogues);
    synth->add_option("--turns", spec.turns_per_dialogue);
    synth->add_option("--vocab", vocab, "one symbol per character");
    synth->add_option("--sample-rate", spec.sample_rate);
    synth->add_option("--min-symbols", spec.min_symbols_per_turn);
    synth->add_option("--max-symbols", spec.max_symbols_per_turn);
    synth->add_option("--context-carryover", spec.context_carryover);
    synth->add_option("--noise", spec.noise_level);
    synth->add_option("--out", synth_out);

    // augment
    auto * aug = app.add_subcommand("augment", "apply waveform augmentations to a manifest");
    std::string aug_manifest, aug_audio, aug_out = "augmented", aug_ops;
    uint64_t aug_seed = 0;
    aug->add_option("--manifest", aug_manifest)->required();
    aug->add_option("--audio", aug_audio)->required();
    aug->add_option("--out", aug_out);
    aug->add_option("--ops", aug_ops, "e.g. stretch:1.1,pitch:2,noise:20,clip:0.5,speed:0.9")
        ->required();
    aug->add_option("--seed", aug_seed);

    // train
    auto * train = app.add_subcommand("train", "run a training regime");
    std::string train_config, train_regime, train_manifest, train_audio;
    std::string train_out = "run", init_projector;
    std::vector<std::string> train_sets;
    train->add_option("--config", train_config, "config file or preset path");
    train->add_option("--regime", train_regime,
                      "stage1_projector_only | stage2_projector_plus_lora | joint");
    train->add_option("--manifest", train_manifest)->required();
    train->add_option("--audio", train_audio)->required();
    train->add_option("--out", train_out);
    train->add_option("--init-projector", init_projector, "stage1 checkpoint for stage2");
    train->add_option("--set", train_sets, "config override key.path=value");

    // decode
    auto * dec = app.add_subcommand("decode", "greedy transcription from a checkpoint");
    std::string dec_ckpt, dec_manifest, dec_audio, dec_out = "hyps.tsv";
    bool dec_context = false, dec_ctx_hyps = false;
    int dec_max_len = 0;
    dec->add_option("--checkpoint", dec_ckpt)->required();
    dec->add_option("--manifest", dec_manifest)->required();
    dec->add_option("--audio", dec_audio)->required();
    dec->add_option("--out", dec_out);
    dec->add_flag("--context", dec_context, "teacher-forced previous-turn context");
    dec->add_flag("--context-from-hyps", dec_ctx_hyps, "chain decoded outputs as context");
    dec->add_option("--max-len", dec_max_len);

    // score
    auto * sc = app.add_subcommand("score", "WER against a reference manifest");
    std::string sc_manifest, sc_hyps, sc_out;
    bool sc_char = false, sc_no_norm = false;
    sc->add_option("--manifest", sc_manifest)->required();
    sc->add_option("--hyps", sc_hyps)->required();
    sc->add_option("--out-prefix", sc_out, "writes <prefix>.csv and <prefix>.txt");
    sc->add_flag("--char", sc_char, "character tokenization");
    sc->add_flag("--no-normalize", sc_no_norm);

    // report
    auto * rep = app.add_subcommand("report", "leaderboard-style table from run metadata");
    std::string rep_runs, rep_out;
    rep->add_option("--runs", rep_runs)->required();
    rep->add_option("--out", rep_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError & e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (synth->parsed()) {
            SyntheticCorpusSpec s = spec;
            s.vocabulary.clear();
            for (char c : vocab) {
                s.vocabulary.push_back(std::string(1, c));
            }
            return cmd_synth_data(s, synth_out);
        }
        if (aug->parsed()) {
            return cmd_augment(aug_manifest, aug_audio, aug_out, aug_ops, aug_seed);
        }
        if (train->parsed()) {
            if (!train_regime.empty()) {
                train_sets.insert(train_sets.begin(), "train.regime=\"" + train_regime + "\"");
            }
            RunConfig cfg = resolve_config(train_config, train_sets);
            return cmd_train(cfg, train_manifest, train_audio, train_out, init_projector);
        }
        if (dec->parsed()) {
            return cmd_decode(dec_ckpt, dec_manifest, dec_audio, dec_out, dec_context,
                              dec_ctx_hyps, dec_max_len);
        }
        if (sc->parsed()) {
            ScoreOptions opts;
            opts.tokenization = sc_char ? WerTokenization::character : WerTokenization::whitespace;
            opts.normalize = !sc_no_norm;
            return cmd_score(sc_manifest, sc_hyps, sc_out, opts);
        }
        if (rep->parsed()) {
            return cmd_report(rep_runs, rep_out);
        }
    } catch (const std::invalid_argument & e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception & e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitOk;
}
