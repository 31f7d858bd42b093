#include "slm/config.hpp"
#include "slm/rng.hpp"

#include <cstdlib>
#include <fstream>
#include <stdexcept>

using json = nlohmann::json;

namespace slm {

std::string RunConfig::canonical_text() const {
    return raw.dump(2); // nlohmann objects keep keys sorted
}

uint64_t RunConfig::config_hash() const {
    return fnv1a(canonical_text());
}

json default_config_json() {
    json j;
    j["model"]["encoder"] = {{"kind", "toy_conv"}, {"d_enc", 64}, {"n_layers", 2},
                             {"n_mels", 128}, {"seed", 0}, {"weights_path", ""}};
    j["model"]["projector"] = {{"variant", "linear"}, {"downsample_factor", 4},
                               {"d_enc", 64}, {"d_llm", 64}, {"qformer_query_len", 64},
                               {"qformer_layers", 2}, {"qformer_input_len", 1280},
                               {"qformer_heads", 4}, {"qformer_hidden", 0}, {"seed", 1}};
    j["model"]["lm"] = {{"d_llm", 64}, {"n_layers", 4}, {"n_heads", 4}, {"max_seq", 512},
                        {"seed", 2}};
    j["model"]["contrastive_seed"] = 3;
    j["train"] = {{"regime", "joint"}, {"lr", 1e-4}, {"warmup_steps", 1000}, {"epochs", 3},
                  {"batch_size", 8}, {"val_batch_size", 2}, {"lambda_contrastive", 0.0},
                  {"contrastive_temperature", 0.07}, {"use_context", false}, {"seed", 0},
                  {"grad_clip", 1.0}, {"max_steps", 0}, {"plain_prompt", "Transcribe: "},
                  {"fresh_projector", false}};
    j["decode"] = {{"max_len", 64}, {"use_context", false}, {"context_from_hyps", false},
                   {"plain_prompt", "Transcribe: "}};
    j["eval"] = {{"tokenization", "whitespace"}, {"normalize", true}};
    return j;
}

template <typename T>
static void maybe(const json & j, const char * key, T & out) {
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

static void merge_defaults(json & dst, const json & defaults) {
    for (auto it = defaults.begin(); it != defaults.end(); ++it) {
        if (!dst.contains(it.key())) {
            dst[it.key()] = it.value();
        } else if (it.value().is_object() && dst[it.key()].is_object()) {
            merge_defaults(dst[it.key()], it.value());
        }
    }
}

RunConfig run_config_from_json(const json & input) {
    json j = input;
    merge_defaults(j, default_config_json());

    RunConfig cfg;
    cfg.raw = j;

    const json & enc = j.at("model").at("encoder");
    const std::string kind = enc.at("kind").get<std::string>();
    if (kind == "toy_conv") {
        cfg.model.encoder.kind = EncoderConfig::Kind::toy_conv;
    } else if (kind == "external") {
        cfg.model.encoder.kind = EncoderConfig::Kind::external;
    } else {
        throw std::invalid_argument("config: unknown encoder kind '" + kind + "'");
    }
    maybe(enc, "d_enc", cfg.model.encoder.d_enc);
    maybe(enc, "n_layers", cfg.model.encoder.n_layers);
    maybe(enc, "n_mels", cfg.model.encoder.n_mels);
    maybe(enc, "seed", cfg.model.encoder.seed);
    maybe(enc, "weights_path", cfg.model.encoder.weights_path);

    const json & proj = j.at("model").at("projector");
    const std::string variant = proj.at("variant").get<std::string>();
    if (variant == "linear") {
        cfg.model.projector.variant = ProjectorVariant::linear;
    } else if (variant == "conv_linear") {
        cfg.model.projector.variant = ProjectorVariant::conv_linear;
    } else if (variant == "qformer") {
        cfg.model.projector.variant = ProjectorVariant::qformer;
    } else {
        throw std::invalid_argument("config: unknown projector variant '" + variant + "'");
    }
    maybe(proj, "downsample_factor", cfg.model.projector.downsample_factor);
    maybe(proj, "d_enc", cfg.model.projector.d_enc);
    maybe(proj, "d_llm", cfg.model.projector.d_llm);
    maybe(proj, "qformer_query_len", cfg.model.projector.qformer_query_len);
    maybe(proj, "qformer_layers", cfg.model.projector.qformer_layers);
    maybe(proj, "qformer_input_len", cfg.model.projector.qformer_input_len);
    maybe(proj, "qformer_heads", cfg.model.projector.qformer_heads);
    maybe(proj, "qformer_hidden", cfg.model.projector.qformer_hidden);
    maybe(proj, "seed", cfg.model.projector.seed);

    const json & lm = j.at("model").at("lm");
    maybe(lm, "d_llm", cfg.model.lm.d_llm);
    maybe(lm, "n_layers", cfg.model.lm.n_layers);
    maybe(lm, "n_heads", cfg.model.lm.n_heads);
    maybe(lm, "max_seq", cfg.model.lm.max_seq);
    maybe(lm, "seed", cfg.model.lm.seed);
    maybe(lm, "alphabet", cfg.model.lm.alphabet);
    maybe(j.at("model"), "contrastive_seed", cfg.model.contrastive_seed);

    const json & train = j.at("train");
    cfg.train.regime = parse_regime(train.at("regime").get<std::string>());
    maybe(train, "lr", cfg.train.lr);
    maybe(train, "warmup_steps", cfg.train.warmup_steps);
    maybe(train, "epochs", cfg.train.epochs);
    maybe(train, "batch_size", cfg.train.batch_size);
    maybe(train, "val_batch_size", cfg.train.val_batch_size);
    maybe(train, "lambda_contrastive", cfg.train.lambda_contrastive);
    maybe(train, "contrastive_temperature", cfg.train.contrastive_temperature);
    maybe(train, "use_context", cfg.train.use_context);
    maybe(train, "seed", cfg.train.seed);
    maybe(train, "grad_clip", cfg.train.grad_clip);
    maybe(train, "max_steps", cfg.train.max_steps);
    maybe(train, "plain_prompt", cfg.train.plain_prompt);
    maybe(train, "fresh_projector", cfg.train.fresh_projector);
    if (train.contains("lora") && !train.at("lora").is_null()) {
        const json & lora = train.at("lora");
        LoraConfig lc;
        maybe(lora, "r", lc.r);
        maybe(lora, "alpha", lc.alpha);
        maybe(lora, "targets", lc.targets);
        maybe(lora, "dropout", lc.dropout);
        cfg.train.lora = lc;
    }

    const json & dec = j.at("decode");
    maybe(dec, "max_len", cfg.decode.max_len);
    maybe(dec, "use_context", cfg.decode.use_context);
    maybe(dec, "context_from_hyps", cfg.decode.context_from_hyps);
    maybe(dec, "plain_prompt", cfg.decode.plain_prompt);
    cfg.decode.mel.n_mels = cfg.model.encoder.n_mels;

    const json & eval = j.at("eval");
    if (eval.contains("tokenization")) {
        const std::string t = eval.at("tokenization").get<std::string>();
        if (t == "whitespace") {
            cfg.eval.tokenization = WerTokenization::whitespace;
        } else if (t == "character") {
            cfg.eval.tokenization = WerTokenization::character;
        } else {
            throw std::invalid_argument("config: unknown tokenization '" + t + "'");
        }
    }
    maybe(eval, "normalize", cfg.eval.normalize);
    return cfg;
}

RunConfig load_run_config(const std::string & path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config file: " + path);
    }
    json j = json::parse(in);
    return run_config_from_json(j);
}

void apply_override(json & j, const std::string & assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw std::invalid_argument("--set expects key.path=value, got '" + assignment + "'");
    }
    std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    // dotted path -> json pointer
    std::string ptr = "/";
    for (char c : path) {
        ptr += (c == '.') ? '/' : c;
    }
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::parse_error &) {
        parsed = value;
    }
    j[json::json_pointer(ptr)] = parsed;
}

void merge_env_seed(json & j) {
    const char * env = std::getenv("SLM_SEED");
    if (env == nullptr || *env == '\0') {
        return;
    }
    try {
        j["train"]["seed"] = std::stoull(env);
    } catch (const std::exception &) {
        throw std::invalid_argument(std::string("SLM_SEED must be an integer, got '") + env + "'");
    }
}

} // namespace slm
