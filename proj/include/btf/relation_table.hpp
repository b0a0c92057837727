#pragma once

#include <random>

#include "btf/tensor.hpp"

namespace btf {

// The word-pair relation table is an [n, n, d_table] tensor; cell (i, j)
// represents the directed pair (word i, word j). d_table stays constant
// across refinement layers so residual additions line up.
struct TableConfig {
    int d_table = 64;
    int interaction_slices = 32;  // bilinear slices mixing h_i and h_j

    void validate() const {
        if (d_table <= 0 || interaction_slices <= 0)
            throw ConfigError("table: d_table and interaction_slices must be positive");
    }
};

inline void init_table_params(ParamStore& ps, const TableConfig& cfg, int d_model,
                              std::mt19937& rng) {
    cfg.validate();
    const int k = cfg.interaction_slices;
    ps.add("table.interaction", randn_init({k, d_model, d_model}, 0.02f, rng));
    ps.add("table.proj.weight", xavier_init(3 * d_model + k, cfg.d_table, rng));
    ps.add("table.proj.bias", Tensor::zeros({cfg.d_table}));
}

// Elementwise max over rows min(i,j)..max(i,j) of H; orientation-free, so
// context_pool(H, i, j) == context_pool(H, j, i).
template <typename S>
TensorT<S> context_pool(const TensorT<S>& H, int i, int j) {
    if (H.rank() != 2) throw DimensionError("context_pool: H must be [n, d]");
    const int n = H.dim(0);
    if (i < 0 || j < 0 || i >= n || j >= n)
        throw DomainError("context_pool: pair (" + std::to_string(i) + "," + std::to_string(j) +
                          ") out of range for n=" + std::to_string(n));
    const int lo = std::min(i, j), hi = std::max(i, j);
    return max_over_axis0(slice_rows(H, lo, hi - lo + 1));
}

// t[k] = h_i^T W[k] h_j; the K-slice bilinear interaction between two words.
template <typename S>
TensorT<S> tensor_interaction(const TensorT<S>& h_i, const TensorT<S>& h_j,
                              const TensorT<S>& w) {
    return bilinear_vec(h_i, h_j, w);
}

// Builds the full initial table in vectorized form: every cell is
// relu(proj([h_i; h_j; c_ij; t_ij])). Cells match the per-pair operations
// above bit for bit.
template <typename S>
TensorT<S> build_table(const ParamStoreT<S>& ps, const TableConfig& cfg, const TensorT<S>& H) {
    if (H.rank() != 2) throw DimensionError("build_table: H must be [n, d]");
    const int d = H.dim(1);

    auto rows = expand_rows_table(H);  // h_i per cell
    auto cols = expand_cols_table(H);  // h_j per cell
    auto ctx = span_max_table(H);      // c_ij per cell

    const auto& w = ps.at("table.interaction");
    if (w.dim(1) != d)
        throw DimensionError("build_table: interaction tensor " + shape_str(w.shape()) +
                             " does not match d_model " + std::to_string(d));
    const int k = w.dim(0);
    auto w_flat = reshape(w, {k, d * d});
    auto ht = transpose2d(H);
    std::vector<TensorT<S>> slices;
    slices.reserve(static_cast<size_t>(k));
    for (int s = 0; s < k; ++s) {
        auto wk = reshape(row(w_flat, s), {d, d});
        slices.push_back(matmul(matmul(H, wk), ht));  // [n, n]
    }
    auto interaction = stack_lastdim(slices);  // [n, n, k]

    const auto& proj = ps.at("table.proj.weight");
    if (proj.dim(1) != cfg.d_table)
        throw ConfigError("build_table: projection width " + std::to_string(proj.dim(1)) +
                          " does not match d_table " + std::to_string(cfg.d_table));
    auto cat = concat_lastdim(std::vector<TensorT<S>>{rows, cols, ctx, interaction});
    return relu(affine(cat, proj, ps.at("table.proj.bias")));
}

}  // namespace btf
