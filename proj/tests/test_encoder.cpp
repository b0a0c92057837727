#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "btf/encoder.hpp"
#include "btf/grad_check.hpp"

using namespace btf;

namespace {

EncoderConfig tiny_config() {
    EncoderConfig cfg;
    cfg.vocab_size = 12;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 24;
    cfg.max_len = 10;
    cfg.dropout = 0.0f;
    return cfg;
}

}  // namespace

TEST_CASE("encode: output shape contract for all valid lengths") {
    auto cfg = tiny_config();
    std::mt19937 rng(1);
    ParamStore ps;
    init_encoder_params(ps, cfg, rng);

    for (int n : {1, 3, 10}) {
        std::vector<int> ids(n, 4);
        auto enc = encode(ps, cfg, ids);
        CHECK(enc.H.shape() == std::vector<int>{n, cfg.d_model});
        CHECK(enc.h_cls.shape() == std::vector<int>{cfg.d_model});
    }
}

TEST_CASE("encode: rejects empty and over-long input") {
    auto cfg = tiny_config();
    std::mt19937 rng(2);
    ParamStore ps;
    init_encoder_params(ps, cfg, rng);
    CHECK_THROWS_AS(encode(ps, cfg, {}), DataError);
    CHECK_THROWS_AS(encode(ps, cfg, std::vector<int>(11, 3)), DataError);
}

TEST_CASE("encoder config validation") {
    auto cfg = tiny_config();
    cfg.n_heads = 3;  // 16 % 3 != 0
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.vocab_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("encode: deterministic in evaluation mode") {
    auto cfg = tiny_config();
    std::mt19937 rng(3);
    ParamStore ps;
    init_encoder_params(ps, cfg, rng);
    std::vector<int> ids{3, 7, 5, 5};
    auto a = encode(ps, cfg, ids);
    auto b = encode(ps, cfg, ids);
    CHECK(a.H.data() == b.H.data());
    CHECK(a.h_cls.data() == b.h_cls.data());
}

TEST_CASE("encode: swapping two distinct tokens changes H (positions active)") {
    auto cfg = tiny_config();
    std::mt19937 rng(4);
    ParamStore ps;
    init_encoder_params(ps, cfg, rng);
    auto a = encode(ps, cfg, {3, 7, 5});
    auto b = encode(ps, cfg, {7, 3, 5});
    bool any_diff = false;
    for (size_t i = 0; i < a.H.numel(); ++i)
        if (a.H.data()[i] != b.H.data()[i]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("encode: gradient flows to every embedding row in use") {
    auto cfg = tiny_config();
    std::mt19937 rng(5);
    ParamStore ps;
    init_encoder_params(ps, cfg, rng);
    std::vector<int> ids{3, 7};

    ps.zero_grads();
    auto enc = encode(ps, cfg, ids);
    auto loss = sum_all(mul(enc.H, enc.H));
    loss.backward();

    auto& g = ps.at("encoder.tok_emb").grad();
    const int d = cfg.d_model;
    for (int id : {3, 7, Vocab::kCls}) {
        float norm = 0.0f;
        for (int j = 0; j < d; ++j) norm += std::abs(g[id * d + j]);
        CHECK(norm > 0.0f);
    }
    // an unused row stays untouched
    float unused = 0.0f;
    for (int j = 0; j < d; ++j) unused += std::abs(g[9 * d + j]);
    CHECK(unused == 0.0f);
}

TEST_CASE("encode: analytic gradients match finite differences") {
    auto cfg = tiny_config();
    cfg.n_layers = 1;
    std::mt19937 rng(6);
    ParamStore ps;
    init_encoder_params(ps, cfg, rng);
    std::vector<int> ids{3, 7, 5};

    auto f = [&](auto& store) {
        auto enc = encode(store, cfg, ids);
        auto h = concat_lastdim(
            std::vector<std::decay_t<decltype(enc.h_cls)>>{reshape(enc.H, {3 * 16}), enc.h_cls});
        return sum_all(mul(h, h));
    };
    std::mt19937 sample_rng(7);
    auto report = grad_check(ps, f, 1e-4, 150, sample_rng);
    CAPTURE(report.worst_path);
    CAPTURE(report.worst_analytic);
    CAPTURE(report.worst_numeric);
    CHECK(report.max_rel_err < 1e-3);
}

TEST_CASE("encode: dropout only perturbs the training path") {
    auto cfg = tiny_config();
    cfg.dropout = 0.5f;
    std::mt19937 rng(8);
    ParamStore ps;
    init_encoder_params(ps, cfg, rng);
    std::vector<int> ids{3, 7, 5};

    auto eval_a = encode(ps, cfg, ids, false);
    auto eval_b = encode(ps, cfg, ids, false);
    CHECK(eval_a.H.data() == eval_b.H.data());

    std::mt19937 d1(42), d2(42), d3(43);
    auto train_a = encode(ps, cfg, ids, true, &d1);
    auto train_b = encode(ps, cfg, ids, true, &d2);
    auto train_c = encode(ps, cfg, ids, true, &d3);
    CHECK(train_a.H.data() == train_b.H.data());  // same seed, same masks
    bool differs = train_a.H.data() != train_c.H.data();
    CHECK(differs);

    CHECK_THROWS_AS(encode(ps, cfg, ids, true, nullptr), ConfigError);
}
