#include "slm/projector.hpp"
#include "slm/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace slm;

namespace {

EncoderOutput fake_enc(int frames, int d_enc, uint64_t seed) {
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

double weighted_sum(const Mat & out, const Mat & weights) {
    double s = 0;
    for (size_t i = 0; i < out.size(); i++) {
        s += out.data[i] * weights.data[i];
    }
    return s;
}

// Central finite differences on a sample of entries per parameter.
void grad_check(Projector & proj, const EncoderOutput & enc, double tol = 1e-4) {
    Mat first = proj.project(enc).embeds;
    Mat d_out(first.rows, first.cols);
    auto rng = make_rng(99);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto & v : d_out.data) {
        v = dist(rng);
    }

    for (Param * p : proj.params()) {
        p->zero_grad();
    }
    proj.project(enc);
    proj.backward(d_out);

    const double eps = 1e-5;
    std::mt19937_64 pick(7);
    for (Param * p : proj.params()) {
        const int n_checks = std::min<int>(8, static_cast<int>(p->v.size()));
        std::uniform_int_distribution<size_t> idx(0, p->v.size() - 1);
        for (int c = 0; c < n_checks; c++) {
            const size_t i = idx(pick);
            const double orig = p->v.data[i];
            p->v.data[i] = orig + eps;
            const double up = weighted_sum(proj.project(enc).embeds, d_out);
            p->v.data[i] = orig - eps;
            const double dn = weighted_sum(proj.project(enc).embeds, d_out);
            p->v.data[i] = orig;
            const double fd = (up - dn) / (2 * eps);
            const double an = p->g.data[i];
            // FD truncation noise is ~1e-6 of the loss scale at eps=1e-5, so
            // relative error is only meaningful above that floor.
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            INFO(p->name << "[" << i << "] fd=" << fd << " an=" << an);
            CHECK(std::abs(fd - an) / denom < tol);
        }
    }
}

} // namespace

TEST_CASE("shape law: 1280 frames, factor 4 -> exactly 320 embeddings") {
    ProjectorConfig cfg;
    cfg.variant = ProjectorVariant::linear;
    cfg.d_enc = 8;
    cfg.d_llm = 12;
    cfg.downsample_factor = 4;
    Projector proj(cfg);
    auto out = proj.project(fake_enc(1280, 8, 1));
    CHECK(out.embeds.rows == 320);
    CHECK(out.embeds.cols == 12);
}

TEST_CASE("downsampling drops the tail remainder") {
    ProjectorConfig cfg;
    cfg.d_enc = 4;
    cfg.d_llm = 4;
    cfg.downsample_factor = 4;
    Projector proj(cfg);
    CHECK(proj.project(fake_enc(11, 4, 2)).embeds.rows == 2);
    CHECK_THROWS(proj.project(fake_enc(3, 4, 2)));
}

TEST_CASE("qformer emits exactly query_len embeddings for any input length") {
    ProjectorConfig cfg;
    cfg.variant = ProjectorVariant::qformer;
    cfg.d_enc = 8;
    cfg.d_llm = 12;
    cfg.qformer_query_len = 64;
    cfg.qformer_input_len = 1280;
    cfg.qformer_layers = 2;
    cfg.qformer_heads = 2;
    cfg.seed = 3;
    Projector proj(cfg);
    for (int frames : {5, 64, 700, 1280}) {
        auto out = proj.project(fake_enc(frames, 8, frames));
        CHECK(out.embeds.rows == 64);
        CHECK(out.embeds.cols == 12);
    }
    CHECK_THROWS(proj.project(fake_enc(1281, 8, 9)));
}

TEST_CASE("qformer attention rows sum to one with zero mass on padding") {
    ProjectorConfig cfg;
    cfg.variant = ProjectorVariant::qformer;
    cfg.d_enc = 6;
    cfg.d_llm = 6;
    cfg.qformer_query_len = 4;
    cfg.qformer_input_len = 32;
    cfg.qformer_layers = 2;
    cfg.qformer_heads = 2;
    Projector proj(cfg);
    const int frames = 10;
    auto maps = proj.qformer_attention_weights(fake_enc(frames, 6, 5));
    REQUIRE(maps.size() == 2);
    REQUIRE(maps[0].size() == 2);
    for (const auto & layer : maps) {
        for (const Mat & head : layer) {
            REQUIRE(head.rows == 4);
            REQUIRE(head.cols == 32);
            for (int i = 0; i < head.rows; i++) {
                double row_sum = 0;
                for (int j = 0; j < head.cols; j++) {
                    row_sum += head(i, j);
                    if (j >= frames) {
                        CHECK(head(i, j) == 0.0);
                    }
                }
                CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("linear projector is affine in its input") {
    ProjectorConfig cfg;
    cfg.d_enc = 4;
    cfg.d_llm = 4;
    cfg.downsample_factor = 2;
    Projector proj(cfg);
    auto x = fake_enc(8, 4, 1);
    auto y = fake_enc(8, 4, 2);
    EncoderOutput mid = x;
    for (size_t i = 0; i < mid.frames.size(); i++) {
        mid.frames.data[i] = 0.5 * (x.frames.data[i] + y.frames.data[i]);
    }
    Mat px = proj.project(x).embeds;
    Mat py = proj.project(y).embeds;
    Mat pm = proj.project(mid).embeds;
    for (size_t i = 0; i < pm.size(); i++) {
        CHECK(pm.data[i] == doctest::Approx(0.5 * (px.data[i] + py.data[i])).epsilon(1e-10));
    }
}

TEST_CASE("projector gradients match finite differences (all variants)") {
    for (auto variant :
         {ProjectorVariant::linear, ProjectorVariant::conv_linear, ProjectorVariant::qformer}) {
        ProjectorConfig cfg;
        cfg.variant = variant;
        cfg.d_enc = 6;
        cfg.d_llm = 8;
        cfg.downsample_factor = 2;
        cfg.qformer_query_len = 3;
        cfg.qformer_input_len = 16;
        cfg.qformer_layers = 2;
        cfg.qformer_heads = 2;
        cfg.seed = 17;
        Projector proj(cfg);
        grad_check(proj, fake_enc(12, 6, 31));
    }
}
