#include "slm/trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace slm {

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::stage1_projector_only: return "stage1_projector_only";
        case Regime::stage2_projector_plus_lora: return "stage2_projector_plus_lora";
        case Regime::joint: return "joint";
    }
    return "?";
}

Regime parse_regime(const std::string & name) {
    if (name == "stage1_projector_only") return Regime::stage1_projector_only;
    if (name == "stage2_projector_plus_lora") return Regime::stage2_projector_plus_lora;
    if (name == "joint") return Regime::joint;
    throw std::invalid_argument("unknown regime '" + name +
                                "' (valid: stage1_projector_only, "
                                "stage2_projector_plus_lora, joint)");
}

double lr_schedule(int step, const TrainConfig & cfg, int total_steps) {
    if (step < 0) {
        throw std::invalid_argument("lr_schedule: step must be >= 0");
    }
    if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps) {
        return cfg.lr * static_cast<double>(step) / cfg.warmup_steps;
    }
    if (total_steps <= cfg.warmup_steps) {
        return cfg.lr; // degenerate: the whole run is warmup
    }
    const double frac = static_cast<double>(total_steps - step) /
                        static_cast<double>(total_steps - cfg.warmup_steps);
    return cfg.lr * std::max(0.0, frac);
}

void write_metrics_log(const std::string & path, const std::vector<MetricsRow> & rows) {
    std::ofstream out(path, std::ios::app);
    if (!out) {
        throw std::runtime_error("cannot write metrics log: " + path);
    }
    for (const auto & r : rows) {
        nlohmann::json j;
        j["step"] = r.step;
        j["loss"] = r.loss;
        j["ce"] = r.ce;
        j["contrastive"] = r.contrastive;
        j["lr"] = r.lr;
        j["wall_ms"] = r.wall_ms;
        out << j.dump() << "\n";
    }
}

Trainer::Trainer(SlmModel & model, TrainConfig cfg) : model_(model), cfg_(std::move(cfg)) {
    if (cfg_.lr <= 0.0) {
        throw std::invalid_argument("trainer: lr must be > 0");
    }
    if (cfg_.warmup_steps < 0 || cfg_.epochs < 1 || cfg_.batch_size < 1) {
        throw std::invalid_argument("trainer: bad warmup/epochs/batch_size");
    }
}

void Trainer::prepare() {
    if (prepared_) {
        return;
    }
    switch (cfg_.regime) {
        case Regime::stage1_projector_only:
            if (cfg_.lora) {
                throw std::invalid_argument(
                    "config error: stage1_projector_only does not use LoRA");
            }
            if (cfg_.lambda_contrastive > 0.0) {
                throw std::invalid_argument(
                    "config error: the contrastive layer is not trained in stage1");
            }
            break;
        case Regime::stage2_projector_plus_lora:
            if (!cfg_.lora) {
                throw std::invalid_argument(
                    "config error: stage2_projector_plus_lora requires a LoRA config");
            }
            break;
        case Regime::joint:
            break; // LoRA optional
    }
    if (cfg_.lora) {
        model_.lm.lora_inject(*cfg_.lora);
    }
    state_.data_rng = make_rng(derive_seed(cfg_.seed, "data"));
    enc_checksum_ = model_.encoder.checksum();
    lm_checksum_ = model_.lm.base_checksum();
    prepared_ = true;
}

ParamList Trainer::trainable_params() {
    ParamList out = model_.projector.params();
    if (cfg_.regime != Regime::stage1_projector_only) {
        for (Param * p : model_.lm.lora_params()) {
            out.push_back(p);
        }
        if (cfg_.lambda_contrastive > 0.0) {
            for (Param * p : model_.con_head.params()) {
                out.push_back(p);
            }
        }
    }
    return out;
}

int Trainer::total_steps(size_t n_items) const {
    const int per_epoch =
        static_cast<int>((n_items + cfg_.batch_size - 1) / cfg_.batch_size);
    int total = cfg_.epochs * per_epoch;
    if (cfg_.max_steps > 0) {
        total = std::min(total, cfg_.max_steps);
    }
    return total;
}

void Trainer::adam_update(double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double t = static_cast<double>(state_.step);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (Param * p : trainable_params()) {
        Mat & m = state_.adam_m[p->name];
        Mat & v = state_.adam_v[p->name];
        if (!m.same_shape(p->v)) {
            m = Mat(p->v.rows, p->v.cols);
            v = Mat(p->v.rows, p->v.cols);
        }
        for (size_t i = 0; i < p->v.data.size(); ++i) {
            const double g = p->g.data[i];
            m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * g;
            v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * g * g;
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            p->v.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void Trainer::assert_frozen() {
    if (model_.encoder.checksum() != enc_checksum_) {
        throw std::logic_error("freeze violation: encoder weights changed");
    }
    if (model_.lm.base_checksum() != lm_checksum_) {
        throw std::logic_error("freeze violation: LM base weights changed");
    }
}

void Trainer::one_step(const std::vector<TrainItem> & items, std::vector<MetricsRow> & log,
                       int total) {
    const auto t0 = std::chrono::steady_clock::now();
    if (state_.pos >= state_.order.size()) {
        state_.order.resize(items.size());
        for (size_t i = 0; i < items.size(); ++i) {
            state_.order[i] = static_cast<int>(i);
        }
        std::shuffle(state_.order.begin(), state_.order.end(), state_.data_rng);
        state_.pos = 0;
        ++state_.epoch;
    }
    const size_t end = std::min(state_.pos + static_cast<size_t>(cfg_.batch_size),
                                state_.order.size());
    std::vector<int> batch(state_.order.begin() + static_cast<long>(state_.pos),
                           state_.order.begin() + static_cast<long>(end));
    state_.pos = end;
    const int b = static_cast<int>(batch.size());

    for (Param * p : model_.all_params()) {
        p->zero_grad();
    }

    // contrastive pass: collect batch representations first
    double con = 0.0;
    Mat d_zs, d_zc;
    std::vector<PoolCache> speech_caches(static_cast<size_t>(b));
    std::vector<PoolCache> context_caches(static_cast<size_t>(b));
    const bool contrastive = cfg_.lambda_contrastive > 0.0;
    if (contrastive) {
        const int d = model_.cfg.lm.d_llm;
        ContrastiveBatch cbatch;
        cbatch.temperature = cfg_.contrastive_temperature;
        cbatch.speech_reps = Mat(b, d);
        cbatch.context_reps = Mat(b, d);
        for (int i = 0; i < b; ++i) {
            const TrainItem & item = items[static_cast<size_t>(batch[static_cast<size_t>(i)])];
            SpeechEmbeds speech = model_.projector.project(item.enc);
            Mat zs = model_.con_head.embed_speech(speech.embeds, speech_caches[static_cast<size_t>(i)]);
            Mat ctx = model_.lm.embed_tokens(item.context_tokens);
            Mat zc = model_.con_head.embed_context(ctx, context_caches[static_cast<size_t>(i)]);
            std::copy(zs.data.begin(), zs.data.end(), cbatch.speech_reps.row_ptr(i));
            std::copy(zc.data.begin(), zc.data.end(), cbatch.context_reps.row_ptr(i));
        }
        con = contrastive_loss(cbatch, &d_zs, &d_zc);
    }

    double ce_sum = 0.0;
    for (int i = 0; i < b; ++i) {
        const TrainItem & item = items[static_cast<size_t>(batch[static_cast<size_t>(i)])];
        SpeechEmbeds speech = model_.projector.project(item.enc);
        InputSequence seq =
            model_.lm.build_spliced_sequence(item.prompt_pre, speech, item.prompt_post,
                                             &item.target);
        Mat d_speech;
        ce_sum += model_.lm.lm_loss(seq, &d_speech);
        for (auto & g : d_speech.data) {
            g /= b;
        }
        if (contrastive) {
            const int d = model_.cfg.lm.d_llm;
            Mat dz_s(1, d), dz_c(1, d);
            for (int j = 0; j < d; ++j) {
                dz_s(0, j) = cfg_.lambda_contrastive * d_zs(i, j);
                dz_c(0, j) = cfg_.lambda_contrastive * d_zc(i, j);
            }
            Mat d_frames;
            model_.con_head.backward_speech(dz_s, speech_caches[static_cast<size_t>(i)],
                                            &d_frames);
            model_.con_head.backward_context(dz_c, context_caches[static_cast<size_t>(i)]);
            for (size_t k = 0; k < d_speech.data.size(); ++k) {
                d_speech.data[k] += d_frames.data[k];
            }
        }
        model_.projector.backward(d_speech);
    }
    const double ce = ce_sum / b;

    // global-norm gradient clipping over the trainable set
    if (cfg_.grad_clip > 0.0) {
        double norm_sq = 0.0;
        for (Param * p : trainable_params()) {
            for (double g : p->g.data) {
                norm_sq += g * g;
            }
        }
        const double norm = std::sqrt(norm_sq);
        if (norm > cfg_.grad_clip) {
            const double scale = cfg_.grad_clip / norm;
            for (Param * p : trainable_params()) {
                for (auto & g : p->g.data) {
                    g *= scale;
                }
            }
        }
    }

    ++state_.step;
    const double lr = lr_schedule(state_.step, cfg_, total);
    adam_update(lr);
    assert_frozen();

    const auto t1 = std::chrono::steady_clock::now();
    MetricsRow row;
    row.step = state_.step;
    row.ce = ce;
    row.contrastive = con;
    row.loss = combined_loss(ce, con, cfg_.lambda_contrastive);
    row.lr = lr;
    row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    log.push_back(row);
}

std::vector<MetricsRow> Trainer::train(const std::vector<TrainItem> & items) {
    return train_steps(items, -1);
}

std::vector<MetricsRow> Trainer::train_steps(const std::vector<TrainItem> & items, int n_steps) {
    prepare();
    if (items.empty()) {
        throw std::invalid_argument("trainer: data must be non-empty");
    }
    const int total = total_steps(items.size());
    std::vector<MetricsRow> log;
    model_.lm.set_train(true);
    int done = 0;
    while (state_.step < total && (n_steps < 0 || done < n_steps)) {
        one_step(items, log, total);
        ++done;
    }
    model_.lm.set_train(false);
    return log;
}

void Trainer::save_checkpoint(const std::string & path, const std::string & config_text) const {
    Container c;
    c.config_text = config_text;
    auto weights = model_.export_weights();
    for (auto & [name, mat] : weights) {
        c.mats["w." + name] = std::move(mat);
    }
    for (const auto & [name, mat] : state_.adam_m) {
        c.mats["adam_m." + name] = mat;
    }
    for (const auto & [name, mat] : state_.adam_v) {
        c.mats["adam_v." + name] = mat;
    }
    std::ostringstream rng;
    rng << state_.data_rng;
    c.strings["rng_data"] = rng.str();
    c.strings["step"] = std::to_string(state_.step);
    c.strings["epoch"] = std::to_string(state_.epoch);
    c.strings["pos"] = std::to_string(state_.pos);
    std::ostringstream order;
    for (size_t i = 0; i < state_.order.size(); ++i) {
        order << (i ? " " : "") << state_.order[i];
    }
    c.strings["order"] = order.str();
    // tokenizer vocabulary travels with the weights so decode results are
    // reproducible across processes
    c.strings["alphabet"] = model_.lm.tok.alphabet;
    save_container(path, c);
}

void load_projector_init(SlmModel & model, const std::string & path) {
    Container c = load_container(path);
    std::map<std::string, Mat> weights;
    for (auto & [name, mat] : c.mats) {
        if (name.rfind("w.proj.", 0) == 0) {
            weights[name.substr(2)] = std::move(mat);
        }
    }
    if (weights.empty()) {
        throw std::runtime_error("no projector weights found in " + path);
    }
    model.import_weights(weights, /*strict=*/false);
}

void Trainer::load_checkpoint(const std::string & path) {
    prepare();
    Container c = load_container(path);
    std::map<std::string, Mat> weights;
    for (auto & [name, mat] : c.mats) {
        if (name.rfind("w.", 0) == 0) {
            weights[name.substr(2)] = std::move(mat);
        } else if (name.rfind("adam_m.", 0) == 0) {
            state_.adam_m[name.substr(7)] = std::move(mat);
        } else if (name.rfind("adam_v.", 0) == 0) {
            state_.adam_v[name.substr(7)] = std::move(mat);
        }
    }
    model_.import_weights(weights);
    std::istringstream rng(c.strings.at("rng_data"));
    rng >> state_.data_rng;
    state_.step = std::stoi(c.strings.at("step"));
    state_.epoch = std::stoi(c.strings.at("epoch"));
    state_.pos = static_cast<size_t>(std::stoul(c.strings.at("pos")));
    state_.order.clear();
    std::istringstream order(c.strings.at("order"));
    int idx;
    while (order >> idx) {
        state_.order.push_back(idx);
    }
    enc_checksum_ = model_.encoder.checksum();
    lm_checksum_ = model_.lm.base_checksum();
}

} // namespace slm
