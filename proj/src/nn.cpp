#include "slm/nn.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace slm {

void normal_init(Mat & m, std::mt19937_64 & rng, double sigma) {
    std::normal_distribution<double> dist(0.0, sigma);
    for (auto & x : m.data) {
        x = dist(rng);
    }
}

uint64_t params_checksum(const ParamList & params) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const Param * p : params) {
        h = fnv1a(p->name, h);
        h = fnv1a(p->v.data.data(), p->v.data.size() * sizeof(double), h);
    }
    return h;
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

void softmax_rows(Mat & m) {
    for (int i = 0; i < m.rows; ++i) {
        double * row = m.row_ptr(i);
        double mx = row[0];
        for (int j = 1; j < m.cols; ++j) {
            mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < m.cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < m.cols; ++j) {
            row[j] /= sum;
        }
    }
}

// ---------------------------------------------------------------- Linear

Linear::Linear(const std::string & name, int in, int out, bool with_bias)
    : w(name + ".w", out, in), bias(name + ".b", 1, out), has_bias(with_bias) {}

void Linear::init(std::mt19937_64 & rng, double sigma) {
    normal_init(w.v, rng, sigma);
    // bias stays zero
}

Mat Linear::forward(const Mat & x) {
    x_cache = x;
    Mat y;
    kernels::matmul_nt(x, w.v, y);
    if (has_bias) {
        for (int i = 0; i < y.rows; ++i) {
            for (int j = 0; j < y.cols; ++j) {
                y(i, j) += bias.v(0, j);
            }
        }
    }
    if (lora) {
        kernels::matmul_nt(x, lora->a.v, xa_cache); // [T x r]
        if (train_mode && lora->dropout > 0.0) {
            std::bernoulli_distribution keep(1.0 - lora->dropout);
            lora->mask_cache = Mat(xa_cache.rows, xa_cache.cols);
            const double inv_keep = 1.0 / (1.0 - lora->dropout);
            for (size_t i = 0; i < xa_cache.data.size(); ++i) {
                lora->mask_cache.data[i] = keep(lora->dropout_rng) ? inv_keep : 0.0;
                xa_cache.data[i] *= lora->mask_cache.data[i];
            }
        } else {
            lora->mask_cache = Mat();
        }
        Mat yl;
        kernels::matmul_nt(xa_cache, lora->b.v, yl); // [T x out]
        for (size_t i = 0; i < y.data.size(); ++i) {
            y.data[i] += lora->scale * yl.data[i];
        }
    }
    return y;
}

Mat Linear::backward(const Mat & dy) {
    Mat dw;
    kernels::matmul_tn(dy, x_cache, dw); // [out x in]
    for (size_t i = 0; i < dw.data.size(); ++i) {
        w.g.data[i] += dw.data[i];
    }
    if (has_bias) {
        for (int i = 0; i < dy.rows; ++i) {
            for (int j = 0; j < dy.cols; ++j) {
                bias.g(0, j) += dy(i, j);
            }
        }
    }
    Mat dx;
    kernels::matmul(dy, w.v, dx); // [T x in]
    if (lora) {
        Mat dxa;
        kernels::matmul(dy, lora->b.v, dxa); // [T x r]
        for (auto & v : dxa.data) {
            v *= lora->scale;
        }
        Mat da, db;
        kernels::matmul_tn(dy, xa_cache, db); // [out x r], uses post-dropout xa
        for (size_t i = 0; i < db.data.size(); ++i) {
            lora->b.g.data[i] += lora->scale * db.data[i];
        }
        if (!lora->mask_cache.empty()) {
            for (size_t i = 0; i < dxa.data.size(); ++i) {
                dxa.data[i] *= lora->mask_cache.data[i];
            }
        }
        kernels::matmul_tn(dxa, x_cache, da); // [r x in]
        for (size_t i = 0; i < da.data.size(); ++i) {
            lora->a.g.data[i] += da.data[i];
        }
        Mat dxl;
        kernels::matmul(dxa, lora->a.v, dxl); // [T x in]
        for (size_t i = 0; i < dx.data.size(); ++i) {
            dx.data[i] += dxl.data[i];
        }
    }
    return dx;
}

void Linear::inject_lora(int r, double alpha, std::mt19937_64 & rng, double dropout) {
    if (lora) {
        throw std::runtime_error("lora already injected on " + w.name);
    }
    LoraAdapter ad;
    ad.a = Param(w.name.substr(0, w.name.size() - 2) + ".lora_a", r, w.v.cols);
    ad.b = Param(w.name.substr(0, w.name.size() - 2) + ".lora_b", w.v.rows, r);
    normal_init(ad.a.v, rng, 0.02);
    // b stays zero: adapted forward equals base forward at injection time
    ad.scale = alpha / static_cast<double>(r);
    ad.dropout = dropout;
    ad.dropout_rng = make_rng(rng());
    lora = std::move(ad);
}

void Linear::merge_lora() {
    if (!lora) {
        return;
    }
    Mat ba;
    kernels::matmul(lora->b.v, lora->a.v, ba); // [out x in]
    for (size_t i = 0; i < w.v.data.size(); ++i) {
        w.v.data[i] += lora->scale * ba.data[i];
    }
    lora.reset();
}

void Linear::collect(ParamList & out) {
    out.push_back(&w);
    if (has_bias) {
        out.push_back(&bias);
    }
}

void Linear::collect_lora(ParamList & out) {
    if (lora) {
        out.push_back(&lora->a);
        out.push_back(&lora->b);
    }
}

// ------------------------------------------------------------- LayerNorm

static constexpr double kLnEps = 1e-5;

LayerNorm::LayerNorm(const std::string & name, int d)
    : gamma(name + ".gamma", 1, d), beta(name + ".beta", 1, d) {
    std::fill(gamma.v.data.begin(), gamma.v.data.end(), 1.0);
}

Mat LayerNorm::forward(const Mat & x) {
    x_cache = x;
    const int d = x.cols;
    mean_cache.assign(x.rows, 0.0);
    rstd_cache.assign(x.rows, 0.0);
    Mat y(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        const double * xi = x.row_ptr(i);
        double mean = 0.0;
        for (int j = 0; j < d; ++j) {
            mean += xi[j];
        }
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xi[j] - mean;
            var += c * c;
        }
        var /= d;
        const double rstd = 1.0 / std::sqrt(var + kLnEps);
        mean_cache[i] = mean;
        rstd_cache[i] = rstd;
        for (int j = 0; j < d; ++j) {
            y(i, j) = gamma.v(0, j) * (xi[j] - mean) * rstd + beta.v(0, j);
        }
    }
    return y;
}

Mat LayerNorm::backward(const Mat & dy) {
    const int d = dy.cols;
    Mat dx(dy.rows, dy.cols);
    for (int i = 0; i < dy.rows; ++i) {
        const double * xi = x_cache.row_ptr(i);
        const double * dyi = dy.row_ptr(i);
        const double mean = mean_cache[i];
        const double rstd = rstd_cache[i];
        double sum_dxhat = 0.0;
        double sum_dxhat_xhat = 0.0;
        for (int j = 0; j < d; ++j) {
            const double xhat = (xi[j] - mean) * rstd;
            const double dxhat = dyi[j] * gamma.v(0, j);
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            gamma.g(0, j) += dyi[j] * xhat;
            beta.g(0, j) += dyi[j];
        }
        for (int j = 0; j < d; ++j) {
            const double xhat = (xi[j] - mean) * rstd;
            const double dxhat = dyi[j] * gamma.v(0, j);
            dx(i, j) = rstd * (dxhat - sum_dxhat / d - xhat * sum_dxhat_xhat / d);
        }
    }
    return dx;
}

void LayerNorm::collect(ParamList & out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

// ------------------------------------------------- MultiHeadAttention

MultiHeadAttention::MultiHeadAttention(const std::string & name, int d, int heads)
    : n_heads(heads), d_model(d),
      wq(name + ".q_proj", d, d), wk(name + ".k_proj", d, d),
      wv(name + ".v_proj", d, d), wo(name + ".o_proj", d, d) {
    if (d % heads != 0) {
        throw std::invalid_argument("attention: d_model must be divisible by n_heads");
    }
}

void MultiHeadAttention::init(std::mt19937_64 & rng, double sigma) {
    wq.init(rng, sigma);
    wk.init(rng, sigma);
    wv.init(rng, sigma);
    wo.init(rng, sigma);
}

Mat MultiHeadAttention::forward(const Mat & q_in, const Mat & kv_in, bool causal,
                                const std::vector<char> * key_valid) {
    const int dh = d_model / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    q_cache = wq.forward(q_in);
    k_cache = wk.forward(kv_in);
    v_cache = wv.forward(kv_in);
    const int lq = q_cache.rows;
    const int lk = k_cache.rows;

    probs.assign(n_heads, Mat());
    concat_cache = Mat(lq, d_model);
    for (int h = 0; h < n_heads; ++h) {
        const int off = h * dh;
        Mat s(lq, lk);
        for (int i = 0; i < lq; ++i) {
            const double * qi = q_cache.row_ptr(i) + off;
            for (int j = 0; j < lk; ++j) {
                if ((causal && j > i) || (key_valid && !(*key_valid)[j])) {
                    s(i, j) = kMaskValue;
                    continue;
                }
                const double * kj = k_cache.row_ptr(j) + off;
                double acc = 0.0;
                for (int c = 0; c < dh; ++c) {
                    acc += qi[c] * kj[c];
                }
                s(i, j) = acc * inv_sqrt;
            }
        }
        softmax_rows(s);
        for (int i = 0; i < lq; ++i) {
            double * oi = concat_cache.row_ptr(i) + off;
            for (int c = 0; c < dh; ++c) {
                oi[c] = 0.0;
            }
            for (int j = 0; j < lk; ++j) {
                const double p = s(i, j);
                if (p == 0.0) {
                    continue;
                }
                const double * vj = v_cache.row_ptr(j) + off;
                for (int c = 0; c < dh; ++c) {
                    oi[c] += p * vj[c];
                }
            }
        }
        probs[h] = std::move(s);
    }
    return wo.forward(concat_cache);
}

std::pair<Mat, Mat> MultiHeadAttention::backward(const Mat & dy) {
    const int dh = d_model / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Mat d_concat = wo.backward(dy); // [lq x d]
    const int lq = d_concat.rows;
    const int lk = k_cache.rows;

    Mat dq(lq, d_model), dk(lk, d_model), dv(lk, d_model);
    for (int h = 0; h < n_heads; ++h) {
        const int off = h * dh;
        const Mat & p = probs[h];
        // dP and dV
        Mat dp(lq, lk);
        for (int i = 0; i < lq; ++i) {
            const double * doi = d_concat.row_ptr(i) + off;
            for (int j = 0; j < lk; ++j) {
                const double * vj = v_cache.row_ptr(j) + off;
                double acc = 0.0;
                for (int c = 0; c < dh; ++c) {
                    acc += doi[c] * vj[c];
                }
                dp(i, j) = acc;
                const double pij = p(i, j);
                if (pij != 0.0) {
                    double * dvj = dv.row_ptr(j) + off;
                    for (int c = 0; c < dh; ++c) {
                        dvj[c] += pij * doi[c];
                    }
                }
            }
        }
        // softmax backward: ds = p * (dp - sum(dp * p)); masked entries have
        // p == 0 and drop out automatically
        for (int i = 0; i < lq; ++i) {
            double dot = 0.0;
            for (int j = 0; j < lk; ++j) {
                dot += dp(i, j) * p(i, j);
            }
            for (int j = 0; j < lk; ++j) {
                const double ds = p(i, j) * (dp(i, j) - dot) * inv_sqrt;
                if (ds == 0.0) {
                    continue;
                }
                const double * kj = k_cache.row_ptr(j) + off;
                const double * qi = q_cache.row_ptr(i) + off;
                double * dqi = dq.row_ptr(i) + off;
                double * dkj = dk.row_ptr(j) + off;
                for (int c = 0; c < dh; ++c) {
                    dqi[c] += ds * kj[c];
                    dkj[c] += ds * qi[c];
                }
            }
        }
    }
    Mat d_q_in = wq.backward(dq);
    Mat d_kv_in = wk.backward(dk);
    Mat d_kv2 = wv.backward(dv);
    for (size_t i = 0; i < d_kv_in.data.size(); ++i) {
        d_kv_in.data[i] += d_kv2.data[i];
    }
    return {std::move(d_q_in), std::move(d_kv_in)};
}

void MultiHeadAttention::collect(ParamList & out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
}

// ----------------------------------------------------------- FeedForward

FeedForward::FeedForward(const std::string & name, int d, int hidden)
    : fc1(name + ".fc1", d, hidden), fc2(name + ".fc2", hidden, d) {}

void FeedForward::init(std::mt19937_64 & rng, double sigma) {
    fc1.init(rng, sigma);
    fc2.init(rng, sigma);
}

Mat FeedForward::forward(const Mat & x) {
    pre_act_cache = fc1.forward(x);
    Mat h = pre_act_cache;
    for (auto & v : h.data) {
        v = gelu(v);
    }
    return fc2.forward(h);
}

Mat FeedForward::backward(const Mat & dy) {
    Mat dh = fc2.backward(dy);
    for (size_t i = 0; i < dh.data.size(); ++i) {
        dh.data[i] *= gelu_grad(pre_act_cache.data[i]);
    }
    return fc1.backward(dh);
}

void FeedForward::collect(ParamList & out) {
    fc1.collect(out);
    fc2.collect(out);
}

} // namespace slm
