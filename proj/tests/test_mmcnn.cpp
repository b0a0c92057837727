#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "btf/grad_check.hpp"
#include "btf/mmcnn.hpp"

using namespace btf;

namespace {

// Straight-line re-derivation of one block with naive loop convolutions,
// independent of the tensor engine. Weights are read from the same store.
std::vector<float> naive_conv(const std::vector<float>& x, const std::vector<float>& w,
                              const std::vector<float>& b, int n, int k, int c, int dil) {
    std::vector<float> out(static_cast<size_t>(n) * n * c, 0.0f);
    const int h = (k - 1) / 2;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int o = 0; o < c; ++o) {
                float acc = b[o];
                for (int u = 0; u < k; ++u)
                    for (int v = 0; v < k; ++v) {
                        const int xi = i + dil * (u - h);
                        const int xj = j + dil * (v - h);
                        if (xi < 0 || xi >= n || xj < 0 || xj >= n) continue;
                        for (int ci = 0; ci < c; ++ci)
                            acc += x[(xi * n + xj) * c + ci] * w[((u * k + v) * c + ci) * c + o];
                    }
                out[(i * n + j) * c + o] = acc;
            }
    return out;
}

std::vector<float> naive_relu(std::vector<float> v) {
    for (auto& x : v) x = std::max(x, 0.0f);
    return v;
}

std::vector<float> naive_add(const std::vector<float>& a, const std::vector<float>& b) {
    std::vector<float> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

std::vector<float> straight_line_block(const ParamStore& ps, const std::vector<float>& input,
                                       int n, int c) {
    auto w = [&](const std::string& p) { return ps.at("mmcnn.block0." + p).data(); };
    auto mixed = naive_relu(naive_conv(input, w("conv_in.weight"), w("conv_in.bias"), n, 1, c, 1));
    std::vector<float> summed(input.size(), 0.0f);
    for (int k : MmcnnConfig::kernel_sizes)
        for (int d : MmcnnConfig::dilations) {
            const std::string base = "k" + std::to_string(k) + ".d" + std::to_string(d) + ".";
            summed = naive_add(
                summed, naive_relu(naive_conv(mixed, w(base + "weight"), w(base + "bias"), n, k,
                                              c, d)));
        }
    auto fused =
        naive_relu(naive_conv(summed, w("conv_out.weight"), w("conv_out.bias"), n, 1, c, 1));
    return naive_add(fused, input);
}

ParamStore zero_block_params(int c) {
    ParamStore ps;
    MmcnnConfig cfg;
    cfg.n_blocks = 2;
    std::mt19937 rng(1);
    init_mmcnn_params(ps, cfg, c, rng);
    for (auto& [path, t] : ps) std::fill(t.data().begin(), t.data().end(), 0.0f);
    return ps;
}

}  // namespace

TEST_CASE("mmcnn_block: zero weights make an exact residual identity") {
    const int c = 4;
    auto ps = zero_block_params(c);
    std::mt19937 rng(2);
    auto input = randn_init({3, 3, c}, 1.0f, rng);
    auto out = mmcnn_block<float>(ps, 0, input);
    CHECK(out.data() == input.data());
}

TEST_CASE("mmcnn_block: shape preserved for n in {1, 2, 7}") {
    const int c = 3;
    MmcnnConfig cfg;
    cfg.n_blocks = 1;
    ParamStore ps;
    std::mt19937 rng(3);
    init_mmcnn_params(ps, cfg, c, rng);
    for (int n : {1, 2, 7}) {
        auto input = randn_init({n, n, c}, 1.0f, rng);
        auto out = mmcnn_block<float>(ps, 0, input);
        CHECK(out.shape() == std::vector<int>{n, n, c});
    }
}

TEST_CASE("mmcnn_block: matches the straight-line equation oracle") {
    const int n = 4, c = 8;
    MmcnnConfig cfg;
    cfg.n_blocks = 1;
    ParamStore ps;
    std::mt19937 rng(4);
    init_mmcnn_params(ps, cfg, c, rng);
    // use clearly non-zero weights so the oracle exercises every branch
    for (auto& [path, t] : ps)
        for (auto& v : t.data()) v = v * 10.0f + 0.01f;

    auto input = randn_init({n, n, c}, 1.0f, rng);
    auto out = mmcnn_block<float>(ps, 0, input);
    auto expect = straight_line_block(ps, input.data(), n, c);
    REQUIRE(out.numel() == expect.size());
    for (size_t i = 0; i < expect.size(); ++i) CHECK(std::abs(out.data()[i] - expect[i]) < 1e-5f);
}

TEST_CASE("mmcnn_block: channel mismatch is a configuration error") {
    auto ps = zero_block_params(4);
    std::mt19937 rng(5);
    auto wrong = randn_init({3, 3, 5}, 1.0f, rng);
    CHECK_THROWS_AS(mmcnn_block<float>(ps, 0, wrong), ConfigError);
}

TEST_CASE("mmcnn_stack: L=0 identity, composed zero blocks identity, L=1 equals one block") {
    const int c = 4;
    MmcnnConfig cfg;
    std::mt19937 rng(6);
    auto input = randn_init({3, 3, c}, 1.0f, rng);

    cfg.n_blocks = 0;
    auto ps0 = zero_block_params(c);
    auto same = mmcnn_stack(ps0, cfg, input);
    CHECK(same.data() == input.data());

    cfg.n_blocks = 2;
    auto two = mmcnn_stack(ps0, cfg, input);
    CHECK(two.data() == input.data());

    ParamStore ps;
    MmcnnConfig one;
    one.n_blocks = 1;
    init_mmcnn_params(ps, one, c, rng);
    auto stacked = mmcnn_stack(ps, one, input);
    auto direct = mmcnn_block<float>(ps, 0, input);
    CHECK(stacked.data() == direct.data());
}

TEST_CASE("mmcnn_block: impulse response stays inside the receptive field") {
    // one block: max tap offset is dilation 3 with a 5x5 kernel -> 6 cells
    const int n = 15, c = 2;
    MmcnnConfig cfg;
    cfg.n_blocks = 1;
    ParamStore ps;
    std::mt19937 rng(7);
    init_mmcnn_params(ps, cfg, c, rng);

    auto base = Tensor::zeros({n, n, c});
    auto out_base = mmcnn_block<float>(ps, 0, base);

    auto poked = Tensor::zeros({n, n, c});
    const int pi = 7, pj = 7;
    poked.data()[(pi * n + pj) * c] = 1.0f;
    auto out_poked = mmcnn_block<float>(ps, 0, poked);

    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const bool inside = std::abs(i - pi) <= 6 && std::abs(j - pj) <= 6;
            if (inside) continue;
            for (int q = 0; q < c; ++q) {
                const size_t off = (static_cast<size_t>(i) * n + j) * c + q;
                CHECK(out_base.data()[off] == out_poked.data()[off]);
            }
        }
}

TEST_CASE("mmcnn_block: gradients match finite differences") {
    const int c = 3;
    MmcnnConfig cfg;
    cfg.n_blocks = 1;
    ParamStore ps;
    std::mt19937 rng(8);
    init_mmcnn_params(ps, cfg, c, rng);
    ps.add("input", randn_init({3, 3, c}, 1.0f, rng));

    auto f = [](auto& store) {
        auto out = mmcnn_block(store, 0, store.at("input"));
        return sum_all(mul(out, out));
    };
    std::mt19937 sample_rng(9);
    auto report = grad_check(ps, f, 1e-4, 150, sample_rng);
    CAPTURE(report.worst_path);
    CHECK(report.max_rel_err < 1e-3);
}
