#pragma once

#include <random>
#include <string>
#include <vector>

#include "btf/dataset.hpp"
#include "btf/tensor.hpp"

namespace btf {

// Contextual encoder configuration. A compact trainable transformer stands in
// for a large pretrained encoder behind the same interface: token ids in,
// per-token vectors H plus a sentence vector h_cls out.
struct EncoderConfig {
    int vocab_size = 0;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 128;
    int max_len = 100;
    float dropout = 0.1f;

    void validate() const {
        if (vocab_size <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 ||
            max_len <= 0)
            throw ConfigError("encoder: all dimensions must be positive");
        if (d_model % n_heads != 0)
            throw ConfigError("encoder: d_model " + std::to_string(d_model) +
                              " not divisible by n_heads " + std::to_string(n_heads));
        if (dropout < 0.0f || dropout >= 1.0f)
            throw ConfigError("encoder: dropout must be in [0,1)");
    }
};

inline void init_encoder_params(ParamStore& ps, const EncoderConfig& cfg, std::mt19937& rng) {
    cfg.validate();
    ps.add("encoder.tok_emb", randn_init({cfg.vocab_size, cfg.d_model}, 0.02f, rng));
    ps.add("encoder.pos_emb", randn_init({cfg.max_len + 1, cfg.d_model}, 0.02f, rng));
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string base = "encoder.layer" + std::to_string(l) + ".";
        for (const char* name : {"wq", "wk", "wv", "wo"})
            ps.add(base + "attn." + name, xavier_init(cfg.d_model, cfg.d_model, rng));
        for (const char* name : {"bq", "bk", "bv", "bo"})
            ps.add(base + "attn." + name, Tensor::zeros({cfg.d_model}));
        ps.add(base + "ln1.gamma", Tensor::full({cfg.d_model}, 1.0f));
        ps.add(base + "ln1.beta", Tensor::zeros({cfg.d_model}));
        ps.add(base + "ln2.gamma", Tensor::full({cfg.d_model}, 1.0f));
        ps.add(base + "ln2.beta", Tensor::zeros({cfg.d_model}));
        ps.add(base + "ffn.w1", xavier_init(cfg.d_model, cfg.d_ff, rng));
        ps.add(base + "ffn.b1", Tensor::zeros({cfg.d_ff}));
        ps.add(base + "ffn.w2", xavier_init(cfg.d_ff, cfg.d_model, rng));
        ps.add(base + "ffn.b2", Tensor::zeros({cfg.d_model}));
    }
}

template <typename S>
struct Encoded {
    TensorT<S> H;      // [n, d_model], sentinel excluded
    TensorT<S> h_cls;  // [d_model], the sentinel's output
};

namespace detail {

template <typename S>
TensorT<S> self_attention(const ParamStoreT<S>& ps, const std::string& base,
                          const TensorT<S>& x, int n_heads) {
    const int d = x.dim(1);
    const int dh = d / n_heads;
    auto q = affine(x, ps.at(base + "wq"), ps.at(base + "bq"));
    auto k = affine(x, ps.at(base + "wk"), ps.at(base + "bk"));
    auto v = affine(x, ps.at(base + "wv"), ps.at(base + "bv"));

    const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
    std::vector<TensorT<S>> heads;
    heads.reserve(static_cast<size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        auto qh = slice_cols(q, h * dh, dh);
        auto kh = slice_cols(k, h * dh, dh);
        auto vh = slice_cols(v, h * dh, dh);
        auto scores = scale(matmul(qh, transpose2d(kh)), inv_sqrt);
        heads.push_back(matmul(softmax_lastdim(scores), vh));
    }
    auto merged = concat_lastdim(heads);
    return affine(merged, ps.at(base + "wo"), ps.at(base + "bo"));
}

}  // namespace detail

// Prepends the CLS sentinel, adds learned positions, and runs the
// self-attention stack. Dropout fires only on the training path, drawing
// masks from rng.
template <typename S>
Encoded<S> encode(const ParamStoreT<S>& ps, const EncoderConfig& cfg,
                  const std::vector<int>& ids, bool train_mode = false,
                  std::mt19937* rng = nullptr) {
    const int n = static_cast<int>(ids.size());
    if (n < 1) throw DataError("encode: empty sentence");
    if (n > cfg.max_len)
        throw DataError("encode: sentence length " + std::to_string(n) + " exceeds max_len " +
                        std::to_string(cfg.max_len));
    if (train_mode && cfg.dropout > 0.0f && rng == nullptr)
        throw ConfigError("encode: training mode with dropout needs an rng");

    std::vector<int> full;
    full.reserve(static_cast<size_t>(n) + 1);
    full.push_back(Vocab::kCls);
    full.insert(full.end(), ids.begin(), ids.end());

    auto x = add(gather_rows(ps.at("encoder.tok_emb"), full),
                 slice_rows(ps.at("encoder.pos_emb"), 0, n + 1));
    const bool drop = train_mode && cfg.dropout > 0.0f;
    if (drop) x = dropout(x, cfg.dropout, *rng);

    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string base = "encoder.layer" + std::to_string(l) + ".";
        auto attn = detail::self_attention(ps, base + "attn.", x, cfg.n_heads);
        if (drop) attn = dropout(attn, cfg.dropout, *rng);
        x = layer_norm(add(x, attn), ps.at(base + "ln1.gamma"), ps.at(base + "ln1.beta"));

        auto hidden = relu(affine(x, ps.at(base + "ffn.w1"), ps.at(base + "ffn.b1")));
        auto out = affine(hidden, ps.at(base + "ffn.w2"), ps.at(base + "ffn.b2"));
        if (drop) out = dropout(out, cfg.dropout, *rng);
        x = layer_norm(add(x, out), ps.at(base + "ln2.gamma"), ps.at(base + "ln2.beta"));
    }

    return Encoded<S>{slice_rows(x, 1, n), row(x, 0)};
}

}  // namespace btf
