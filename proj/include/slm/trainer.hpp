#pragma once

#include "slm/checkpoint.hpp"
#include "slm/model.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace slm {

enum class Regime { stage1_projector_only, stage2_projector_plus_lora, joint };

std::string regime_name(Regime r);
Regime parse_regime(const std::string & name);

struct TrainConfig {
    Regime regime = Regime::joint;
    double lr = 1e-4;
    int warmup_steps = 1000;
    int epochs = 3;
    int batch_size = 8;
    int val_batch_size = 2;
    double lambda_contrastive = 0.0;
    double contrastive_temperature = 0.07;
    bool use_context = false;
    uint64_t seed = 0;
    std::optional<LoraConfig> lora;
    double grad_clip = 1.0;
    bool fresh_projector = false; // stage2 without a stage1 checkpoint
    int max_steps = 0;            // 0: epochs decide; > 0: hard cap
    std::string plain_prompt = "Transcribe: ";
};

// Linear ramp 0 -> lr over warmup_steps, then linear decay to 0 at the final
// step; continuous at the boundary.
double lr_schedule(int step, const TrainConfig & cfg, int total_steps);

struct MetricsRow {
    int step = 0;
    double loss = 0.0;
    double ce = 0.0;
    double contrastive = 0.0;
    double lr = 0.0;
    double wall_ms = 0.0;
};

void write_metrics_log(const std::string & path, const std::vector<MetricsRow> & rows);

struct TrainerState {
    int step = 0;
    int epoch = 0;
    size_t pos = 0; // position within the current epoch order
    std::vector<int> order;
    std::mt19937_64 data_rng;
    std::map<std::string, Mat> adam_m, adam_v;
};

// Initializes the projector from a stage1 checkpoint ("starting from the
// projector trained in the first step").
void load_projector_init(SlmModel & model, const std::string & path);

class Trainer {
public:
    Trainer(SlmModel & model, TrainConfig cfg);

    // Validates the regime/config combination and injects LoRA when the
    // regime calls for it. Throws before any step on a mismatch.
    void prepare();

    // Runs the configured number of steps. Returns the metrics log.
    std::vector<MetricsRow> train(const std::vector<TrainItem> & items);
    // Runs at most n steps (for twin-run and resume tests).
    std::vector<MetricsRow> train_steps(const std::vector<TrainItem> & items, int n_steps);

    int total_steps(size_t n_items) const;

    void save_checkpoint(const std::string & path, const std::string & config_text) const;
    // Restores weights, optimizer state, RNG and step counter. The model must
    // already be built (and LoRA injected) to the same shape.
    void load_checkpoint(const std::string & path);

    const TrainerState & state() const { return state_; }
    ParamList trainable_params();

private:
    void one_step(const std::vector<TrainItem> & items, std::vector<MetricsRow> & log,
                  int total);
    void adam_update(double lr);
    void assert_frozen();

    SlmModel & model_;
    TrainConfig cfg_;
    TrainerState state_;
    bool prepared_ = false;
    uint64_t enc_checksum_ = 0;
    uint64_t lm_checksum_ = 0;
};

} // namespace slm
