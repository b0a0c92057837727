#pragma once

#include <array>
#include <random>
#include <string>

#include "btf/tensor.hpp"

namespace btf {

// Residual refinement stack over the relation table. Each block mixes two
// kernel sizes at three dilations and adds the result back onto its input,
// so a zero-initialized block is exactly the identity.
struct MmcnnConfig {
    int n_blocks = 2;

    static constexpr std::array<int, 2> kernel_sizes{3, 5};
    static constexpr std::array<int, 3> dilations{1, 2, 3};

    void validate() const {
        if (n_blocks < 0) throw ConfigError("mmcnn: n_blocks must be >= 0");
    }
};

inline void init_mmcnn_params(ParamStore& ps, const MmcnnConfig& cfg, int channels,
                              std::mt19937& rng) {
    cfg.validate();
    // near-zero init keeps early blocks close to the identity map
    const float init_scale = 1e-2f;
    for (int l = 0; l < cfg.n_blocks; ++l) {
        const std::string base = "mmcnn.block" + std::to_string(l) + ".";
        ps.add(base + "conv_in.weight",
               randn_init({1, 1, channels, channels}, init_scale, rng));
        ps.add(base + "conv_in.bias", Tensor::zeros({channels}));
        for (int k : MmcnnConfig::kernel_sizes)
            for (int d : MmcnnConfig::dilations) {
                const std::string branch =
                    base + "k" + std::to_string(k) + ".d" + std::to_string(d) + ".";
                ps.add(branch + "weight", randn_init({k, k, channels, channels}, init_scale, rng));
                ps.add(branch + "bias", Tensor::zeros({channels}));
            }
        ps.add(base + "conv_out.weight",
               randn_init({1, 1, channels, channels}, init_scale, rng));
        ps.add(base + "conv_out.bias", Tensor::zeros({channels}));
    }
}

template <typename S>
TensorT<S> mmcnn_block(const ParamStoreT<S>& ps, int block_index, const TensorT<S>& t_prev) {
    const std::string base = "mmcnn.block" + std::to_string(block_index) + ".";
    if (t_prev.rank() != 3 || t_prev.dim(0) != t_prev.dim(1))
        throw DimensionError("mmcnn_block: table must be [n,n,c], got " +
                             shape_str(t_prev.shape()));
    if (ps.at(base + "conv_in.weight").dim(2) != t_prev.dim(2))
        throw ConfigError("mmcnn_block: channel mismatch, table has " +
                          std::to_string(t_prev.dim(2)) + " channels, block expects " +
                          std::to_string(ps.at(base + "conv_in.weight").dim(2)));

    auto conv = [&](const TensorT<S>& x, const std::string& name, int dilation) {
        return add_channels(conv2d_dilated(x, ps.at(name + "weight"), dilation),
                            ps.at(name + "bias"));
    };

    auto mixed = relu(conv(t_prev, base + "conv_in.", 1));

    TensorT<S> summed;
    for (int k : MmcnnConfig::kernel_sizes) {
        TensorT<S> branch;
        for (int d : MmcnnConfig::dilations) {
            const std::string name =
                base + "k" + std::to_string(k) + ".d" + std::to_string(d) + ".";
            auto leg = relu(conv(mixed, name, d));
            branch = branch.defined() ? add(branch, leg) : leg;
        }
        summed = summed.defined() ? add(summed, branch) : branch;
    }

    auto fused = relu(conv(summed, base + "conv_out.", 1));
    return add(fused, t_prev);
}

template <typename S>
TensorT<S> mmcnn_stack(const ParamStoreT<S>& ps, const MmcnnConfig& cfg, const TensorT<S>& t0) {
    cfg.validate();
    auto t = t0;
    for (int l = 0; l < cfg.n_blocks; ++l) t = mmcnn_block(ps, l, t);
    return t;
}

}  // namespace btf
