// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace cotforget {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int d_ff = 256;
    int max_len = 256;
    double init_std = 0.02;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

/// Offsets of every parameter tensor inside the flat buffer.
struct ParamLayout {
    struct Layer {
        size_t norm1, wq, wk, wv, wo, norm2, w1, b1, w2, b2;
    };
    size_t tok_emb = 0, pos_emb = 0, norm_f = 0, w_out = 0, b_out = 0;
    std::vector<Layer> layers;
    size_t total = 0;

    explicit ParamLayout(const ModelConfig& cfg);
};

/// Activations kept by forward() for backward().
struct LayerTrace {
    Mat x_in;
    Vec r1;
    Mat h1, q, k, v;
    std::vector<Mat> probs;  // one T x T matrix per head
    Mat o, x_mid;
    Vec r2;
    Mat h2, pre, act;
};

struct ForwardTrace {
    std::vector<int> tokens;
    std::vector<LayerTrace> layers;
    Mat x_final;
    Vec rf;
    Mat hf;
};

/// Decoder-only transformer: learned positions, RMSNorm pre-norm blocks,
/// causal multi-head attention, GELU MLP, untied output projection. All
/// parameters live in one flat buffer so optimizers and hashing see a span.
class TinyLM {
public:
    TinyLM() = default;
    TinyLM(const ModelConfig& cfg, std::uint64_t seed);
    TinyLM(const ModelConfig& cfg, std::vector<double> params);

    const ModelConfig& config() const noexcept { return cfg_; }
    const ParamLayout& layout() const noexcept { return layout_; }
    size_t num_params() const noexcept { return params_.size(); }
    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }

    /// 1 for tensors that take weight decay (matrices, embeddings), 0 for gains and biases.
    std::vector<std::uint8_t> decay_mask() const;

    /// Row t of the result holds next-token logits after reading tokens[0..t].
    Mat forward(std::span<const int> tokens, ForwardTrace* trace = nullptr) const;

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logits).
    void backward(const ForwardTrace& trace, const Mat& dlogits, std::span<double> grad) const;

    /// SHA-256 of the raw parameter bytes.
    std::string hash() const;

    /// Incremental decoding with a key/value cache. Produces the same logits as
    /// forward() on the growing prefix.
    class Decoder {
    public:
        explicit Decoder(const TinyLM& model);
        Vec step(int token);
        int position() const noexcept { return pos_; }

    private:
        const TinyLM* model_;
        std::vector<Mat> k_cache_, v_cache_;
        int pos_ = 0;
    };

    Decoder decoder() const { return Decoder(*this); }

private:
    ModelConfig cfg_;
    ParamLayout layout_{ModelConfig{1, 4, 1, 1, 4, 1}};
    std::vector<double> params_;
};

}  // namespace cotforget
