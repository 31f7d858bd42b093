#pragma once

#include "slm/mat.hpp"
#include "slm/rng.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace slm {

// Named parameter with gradient accumulator. Grads are computed for every
// parameter; the optimizer decides which ones actually move.
struct Param {
    std::string name;
    Mat v;
    Mat g;

    Param() = default;
    Param(std::string n, int rows, int cols)
        : name(std::move(n)), v(rows, cols), g(rows, cols) {}

    void zero_grad() { g.zero(); }
};

using ParamList = std::vector<Param *>;

void normal_init(Mat & m, std::mt19937_64 & rng, double sigma = 0.02);

uint64_t params_checksum(const ParamList & params);

double gelu(double x);
double gelu_grad(double x);

// Low-rank adapter attached to a Linear: effective map W + (alpha/r) * B * A.
// B starts at zero so injection leaves the forward pass unchanged.
struct LoraAdapter {
    Param a; // [r x in]
    Param b; // [out x r]
    double scale = 1.0; // alpha / r
    double dropout = 0.0;
    std::mt19937_64 dropout_rng;
    Mat mask_cache;
};

struct Linear {
    Param w;              // [out x in]
    Param bias;           // [1 x out]
    bool has_bias = true;
    bool train_mode = false; // enables LoRA dropout
    std::optional<LoraAdapter> lora;

    Mat x_cache;
    Mat xa_cache; // x * A^T when LoRA is active

    Linear() = default;
    Linear(const std::string & name, int in, int out, bool with_bias = true);

    void init(std::mt19937_64 & rng, double sigma = 0.02);

    Mat forward(const Mat & x);
    // Accumulates grads into w/bias/lora and returns dL/dx.
    Mat backward(const Mat & dy);

    void inject_lora(int r, double alpha, std::mt19937_64 & rng, double dropout = 0.0);
    void merge_lora();

    void collect(ParamList & out);
    void collect_lora(ParamList & out);
};

struct LayerNorm {
    Param gamma; // [1 x d]
    Param beta;  // [1 x d]

    Mat x_cache;
    std::vector<double> mean_cache, rstd_cache;

    LayerNorm() = default;
    LayerNorm(const std::string & name, int d);

    Mat forward(const Mat & x);
    Mat backward(const Mat & dy);

    void collect(ParamList & out);
};

struct MultiHeadAttention {
    int n_heads = 1;
    int d_model = 0;
    Linear wq, wk, wv, wo;

    Mat q_cache, k_cache, v_cache, concat_cache;
    std::vector<Mat> probs; // per-head attention, rows sum to 1

    MultiHeadAttention() = default;
    MultiHeadAttention(const std::string & name, int d, int heads);

    void init(std::mt19937_64 & rng, double sigma = 0.02);

    // q_in: [Lq x d], kv_in: [Lk x d]. key_valid (optional) marks which kv
    // positions may receive attention mass; invalid ones get exactly zero.
    Mat forward(const Mat & q_in, const Mat & kv_in, bool causal,
                const std::vector<char> * key_valid = nullptr);
    // Returns (d_q_in, d_kv_in).
    std::pair<Mat, Mat> backward(const Mat & dy);

    void collect(ParamList & out);
};

struct FeedForward {
    Linear fc1, fc2;
    Mat pre_act_cache;

    FeedForward() = default;
    FeedForward(const std::string & name, int d, int hidden);

    void init(std::mt19937_64 & rng, double sigma = 0.02);

    Mat forward(const Mat & x);
    Mat backward(const Mat & dy);

    void collect(ParamList & out);
};

// Row-wise softmax, numerically stable. Entries at masked positions come out
// exactly zero when the input holds kMaskValue there.
inline constexpr double kMaskValue = -1e30;
void softmax_rows(Mat & m);

} // namespace slm
