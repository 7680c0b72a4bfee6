// SPDX-License-Identifier: Apache-2.0
#include "cotforget/model.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "cotforget/error.hpp"
#include "cotforget/text.hpp"

namespace cotforget {

namespace {

using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;
using CMapRow = Eigen::Map<const Eigen::RowVectorXd>;
using MapRow = Eigen::Map<Eigen::RowVectorXd>;

constexpr double kNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

CMapMat cmat(std::span<const double> p, size_t off, int rows, int cols) { return {p.data() + off, rows, cols}; }
MapMat mmat(std::span<double> p, size_t off, int rows, int cols) { return {p.data() + off, rows, cols}; }
CMapRow crow(std::span<const double> p, size_t off, int n) { return {p.data() + off, n}; }
MapRow mrow(std::span<double> p, size_t off, int n) { return {p.data() + off, n}; }

// y = x / rms(x) * g, row-wise. Returns the per-row rms.
Vec rms_norm(const Mat& x, const CMapRow& g, Mat& y) {
    const auto d = static_cast<double>(x.cols());
    Vec r(x.rows());
    y.resize(x.rows(), x.cols());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        r(t) = std::sqrt(x.row(t).squaredNorm() / d + kNormEps);
        y.row(t) = x.row(t).cwiseProduct(g) / r(t);
    }
    return r;
}

// Backward of rms_norm; adds into dx and dg.
void rms_norm_backward(const Mat& x, const Vec& r, const CMapRow& g, const Mat& dy, Mat& dx, MapRow dg) {
    const auto d = static_cast<double>(x.cols());
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        const Eigen::RowVectorXd u = dy.row(t).cwiseProduct(g);
        const double ux = u.dot(x.row(t));
        const double rt = r(t);
        dx.row(t) += u / rt - x.row(t) * (ux / (d * rt * rt * rt));
        dg += dy.row(t).cwiseProduct(x.row(t)) / rt;
    }
}

double gelu(double a) { return 0.5 * a * (1.0 + std::tanh(kGeluC * (a + 0.044715 * a * a * a))); }

double gelu_grad(double a) {
    const double t = std::tanh(kGeluC * (a + 0.044715 * a * a * a));
    return 0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * a * a);
}

// Portable N(0,1) via Box-Muller over mt19937_64 (std distributions vary by library).
class NormalSource {
public:
    explicit NormalSource(std::uint64_t seed) : rng_(seed) {}
    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        constexpr double two_pi = 6.283185307179586;
        const double u1 = (static_cast<double>(rng_() >> 11) + 1.0) / 9007199254740993.0;
        const double u2 = static_cast<double>(rng_() >> 11) / 9007199254740992.0;
        const double rad = std::sqrt(-2.0 * std::log(u1));
        spare_ = rad * std::sin(two_pi * u2);
        has_spare_ = true;
        return rad * std::cos(two_pi * u2);
    }

private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace

nlohmann::json ModelConfig::to_json() const {
    return {{"vocab_size", vocab_size}, {"d_model", d_model}, {"n_layers", n_layers}, {"n_heads", n_heads},
            {"d_ff", d_ff},             {"max_len", max_len}, {"init_std", init_std}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.d_model = j.value("d_model", c.d_model);
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.max_len = j.value("max_len", c.max_len);
    c.init_std = j.value("init_std", c.init_std);
    return c;
}

void ModelConfig::validate() const {
    if (vocab_size <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 || max_len <= 0) {
        throw ConfigError("model dimensions must be positive");
    }
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
}

ParamLayout::ParamLayout(const ModelConfig& cfg) {
    const auto V = static_cast<size_t>(cfg.vocab_size);
    const auto d = static_cast<size_t>(cfg.d_model);
    const auto f = static_cast<size_t>(cfg.d_ff);
    size_t off = 0;
    auto take = [&off](size_t n) {
        const size_t at = off;
        off += n;
        return at;
    };
    tok_emb = take(V * d);
    pos_emb = take(static_cast<size_t>(cfg.max_len) * d);
    for (int l = 0; l < cfg.n_layers; ++l) {
        Layer L{};
        L.norm1 = take(d);
        L.wq = take(d * d);
        L.wk = take(d * d);
        L.wv = take(d * d);
        L.wo = take(d * d);
        L.norm2 = take(d);
        L.w1 = take(d * f);
        L.b1 = take(f);
        L.w2 = take(f * d);
        L.b2 = take(d);
        layers.push_back(L);
    }
    norm_f = take(d);
    w_out = take(d * V);
    b_out = take(V);
    total = off;
}

TinyLM::TinyLM(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), layout_((cfg.validate(), cfg)) {
    params_.assign(layout_.total, 0.0);
    NormalSource normal(seed);
    const auto mask = decay_mask();
    for (size_t i = 0; i < params_.size(); ++i) {
        params_[i] = mask[i] ? normal.next() * cfg_.init_std : 0.0;
    }
    const auto d = static_cast<size_t>(cfg_.d_model);
    auto ones = [&](size_t off) { std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(off), d, 1.0); };
    for (const auto& L : layout_.layers) {
        ones(L.norm1);
        ones(L.norm2);
    }
    ones(layout_.norm_f);
}

TinyLM::TinyLM(const ModelConfig& cfg, std::vector<double> params)
    : cfg_(cfg), layout_((cfg.validate(), cfg)), params_(std::move(params)) {
    if (params_.size() != layout_.total) {
        throw ValidationError("parameter buffer has " + std::to_string(params_.size()) + " values, layout needs " +
                              std::to_string(layout_.total));
    }
}

std::vector<std::uint8_t> TinyLM::decay_mask() const {
    std::vector<std::uint8_t> m(layout_.total, 1);
    const auto d = static_cast<size_t>(cfg_.d_model);
    const auto f = static_cast<size_t>(cfg_.d_ff);
    auto clear = [&](size_t off, size_t n) { std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(off), n, 0); };
    for (const auto& L : layout_.layers) {
        clear(L.norm1, d);
        clear(L.norm2, d);
        clear(L.b1, f);
        clear(L.b2, d);
    }
    clear(layout_.norm_f, d);
    clear(layout_.b_out, static_cast<size_t>(cfg_.vocab_size));
    return m;
}

Mat TinyLM::forward(std::span<const int> tokens, ForwardTrace* trace) const {
    const int T = static_cast<int>(tokens.size());
    const int d = cfg_.d_model;
    const int f = cfg_.d_ff;
    const int V = cfg_.vocab_size;
    const int H = cfg_.n_heads;
    const int dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    if (T == 0) throw ValidationError("forward on empty sequence");
    if (T > cfg_.max_len) throw TruncationError("sequence longer than model max_len");
    const std::span<const double> p = params_;

    Mat x(T, d);
    const auto tok = cmat(p, layout_.tok_emb, V, d);
    const auto pos = cmat(p, layout_.pos_emb, cfg_.max_len, d);
    for (int t = 0; t < T; ++t) {
        if (tokens[t] < 0 || tokens[t] >= V) throw ValidationError("token id outside vocabulary");
        x.row(t) = tok.row(tokens[t]) + pos.row(t);
    }
    if (trace) {
        trace->tokens.assign(tokens.begin(), tokens.end());
        trace->layers.assign(static_cast<size_t>(cfg_.n_layers), LayerTrace{});
    }

    for (int l = 0; l < cfg_.n_layers; ++l) {
        const auto& L = layout_.layers[static_cast<size_t>(l)];
        LayerTrace local;
        LayerTrace& lt = trace ? trace->layers[static_cast<size_t>(l)] : local;
        lt.x_in = x;
        lt.r1 = rms_norm(x, crow(p, L.norm1, d), lt.h1);
        lt.q = lt.h1 * cmat(p, L.wq, d, d);
        lt.k = lt.h1 * cmat(p, L.wk, d, d);
        lt.v = lt.h1 * cmat(p, L.wv, d, d);
        lt.o.resize(T, d);
        lt.probs.assign(static_cast<size_t>(H), Mat());
        for (int h = 0; h < H; ++h) {
            Mat s = lt.q.middleCols(h * dh, dh) * lt.k.middleCols(h * dh, dh).transpose() * scale;
            Mat& prob = lt.probs[static_cast<size_t>(h)];
            prob = Mat::Zero(T, T);
            for (int i = 0; i < T; ++i) {
                const double mx = s.row(i).head(i + 1).maxCoeff();
                double z = 0.0;
                for (int j = 0; j <= i; ++j) {
                    prob(i, j) = std::exp(s(i, j) - mx);
                    z += prob(i, j);
                }
                prob.row(i).head(i + 1) /= z;
            }
            lt.o.middleCols(h * dh, dh) = prob * lt.v.middleCols(h * dh, dh);
        }
        x = x + lt.o * cmat(p, L.wo, d, d);
        lt.x_mid = x;
        lt.r2 = rms_norm(x, crow(p, L.norm2, d), lt.h2);
        lt.pre = lt.h2 * cmat(p, L.w1, d, f);
        lt.pre.rowwise() += crow(p, L.b1, f);
        lt.act = lt.pre.unaryExpr([](double a) { return gelu(a); });
        Mat mlp = lt.act * cmat(p, L.w2, f, d);
        mlp.rowwise() += crow(p, L.b2, d);
        x += mlp;
    }

    Mat hf;
    Vec rf = rms_norm(x, crow(p, layout_.norm_f, d), hf);
    Mat logits = hf * cmat(p, layout_.w_out, d, V);
    logits.rowwise() += crow(p, layout_.b_out, V);
    if (trace) {
        trace->x_final = std::move(x);
        trace->rf = std::move(rf);
        trace->hf = std::move(hf);
    }
    return logits;
}

void TinyLM::backward(const ForwardTrace& tr, const Mat& dlogits, std::span<double> grad) const {
    const int T = static_cast<int>(tr.tokens.size());
    const int d = cfg_.d_model;
    const int f = cfg_.d_ff;
    const int V = cfg_.vocab_size;
    const int H = cfg_.n_heads;
    const int dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    if (grad.size() != params_.size()) throw ValidationError("gradient buffer size mismatch");
    if (dlogits.rows() != T || dlogits.cols() != V) throw ValidationError("dlogits shape mismatch");
    const std::span<const double> p = params_;

    mmat(grad, layout_.w_out, d, V).noalias() += tr.hf.transpose() * dlogits;
    mrow(grad, layout_.b_out, V) += dlogits.colwise().sum();
    const Mat dhf = dlogits * cmat(p, layout_.w_out, d, V).transpose();
    Mat dx = Mat::Zero(T, d);
    rms_norm_backward(tr.x_final, tr.rf, crow(p, layout_.norm_f, d), dhf, dx, mrow(grad, layout_.norm_f, d));

    for (int l = cfg_.n_layers - 1; l >= 0; --l) {
        const auto& L = layout_.layers[static_cast<size_t>(l)];
        const auto& lt = tr.layers[static_cast<size_t>(l)];

        // MLP branch: x_out = x_mid + gelu(h2 W1 + b1) W2 + b2
        mrow(grad, L.b2, d) += dx.colwise().sum();
        mmat(grad, L.w2, f, d).noalias() += lt.act.transpose() * dx;
        Mat dpre = dx * cmat(p, L.w2, f, d).transpose();
        for (int t = 0; t < T; ++t) {
            for (int j = 0; j < f; ++j) dpre(t, j) *= gelu_grad(lt.pre(t, j));
        }
        mrow(grad, L.b1, f) += dpre.colwise().sum();
        mmat(grad, L.w1, d, f).noalias() += lt.h2.transpose() * dpre;
        const Mat dh2 = dpre * cmat(p, L.w1, d, f).transpose();
        Mat dx_mid = dx;
        rms_norm_backward(lt.x_mid, lt.r2, crow(p, L.norm2, d), dh2, dx_mid, mrow(grad, L.norm2, d));

        // Attention branch: x_mid = x_in + O Wo
        mmat(grad, L.wo, d, d).noalias() += lt.o.transpose() * dx_mid;
        const Mat dO = dx_mid * cmat(p, L.wo, d, d).transpose();
        Mat dq(T, d), dk(T, d), dv(T, d);
        for (int h = 0; h < H; ++h) {
            const Mat& prob = lt.probs[static_cast<size_t>(h)];
            const auto dOh = dO.middleCols(h * dh, dh);
            dv.middleCols(h * dh, dh) = prob.transpose() * dOh;
            const Mat dP = dOh * lt.v.middleCols(h * dh, dh).transpose();
            Mat dS = Mat::Zero(T, T);
            for (int i = 0; i < T; ++i) {
                const double dot = dP.row(i).head(i + 1).dot(prob.row(i).head(i + 1));
                for (int j = 0; j <= i; ++j) dS(i, j) = prob(i, j) * (dP(i, j) - dot) * scale;
            }
            dq.middleCols(h * dh, dh) = dS * lt.k.middleCols(h * dh, dh);
            dk.middleCols(h * dh, dh) = dS.transpose() * lt.q.middleCols(h * dh, dh);
        }
        mmat(grad, L.wq, d, d).noalias() += lt.h1.transpose() * dq;
        mmat(grad, L.wk, d, d).noalias() += lt.h1.transpose() * dk;
        mmat(grad, L.wv, d, d).noalias() += lt.h1.transpose() * dv;
        const Mat dh1 = dq * cmat(p, L.wq, d, d).transpose() + dk * cmat(p, L.wk, d, d).transpose() +
                        dv * cmat(p, L.wv, d, d).transpose();
        dx = dx_mid;
        rms_norm_backward(lt.x_in, lt.r1, crow(p, L.norm1, d), dh1, dx, mrow(grad, L.norm1, d));
    }

    auto dtok = mmat(grad, layout_.tok_emb, V, d);
    auto dpos = mmat(grad, layout_.pos_emb, cfg_.max_len, d);
    for (int t = 0; t < T; ++t) {
        dtok.row(tr.tokens[static_cast<size_t>(t)]) += dx.row(t);
        dpos.row(t) += dx.row(t);
    }
}

std::string TinyLM::hash() const {
    return sha256_hex(std::string_view(reinterpret_cast<const char*>(params_.data()), params_.size() * sizeof(double)));
}

TinyLM::Decoder::Decoder(const TinyLM& model) : model_(&model) {
    const auto& c = model.cfg_;
    k_cache_.assign(static_cast<size_t>(c.n_layers), Mat(c.max_len, c.d_model));
    v_cache_.assign(static_cast<size_t>(c.n_layers), Mat(c.max_len, c.d_model));
}

Vec TinyLM::Decoder::step(int token) {
    const auto& m = *model_;
    const auto& c = m.cfg_;
    const int d = c.d_model;
    const int f = c.d_ff;
    const int V = c.vocab_size;
    const int H = c.n_heads;
    const int dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    if (pos_ >= c.max_len) throw TruncationError("decoder reached model max_len");
    if (token < 0 || token >= V) throw ValidationError("token id outside vocabulary");
    const std::span<const double> p = m.params_;
    const auto& lay = m.layout_;

    Mat x = cmat(p, lay.tok_emb, V, d).row(token) + cmat(p, lay.pos_emb, c.max_len, d).row(pos_);
    Mat h;
    for (int l = 0; l < c.n_layers; ++l) {
        const auto& L = lay.layers[static_cast<size_t>(l)];
        rms_norm(x, crow(p, L.norm1, d), h);
        Mat& kc = k_cache_[static_cast<size_t>(l)];
        Mat& vc = v_cache_[static_cast<size_t>(l)];
        const Mat q = h * cmat(p, L.wq, d, d);
        kc.row(pos_) = h * cmat(p, L.wk, d, d);
        vc.row(pos_) = h * cmat(p, L.wv, d, d);
        Mat o(1, d);
        for (int hd = 0; hd < H; ++hd) {
            Eigen::RowVectorXd s =
                q.middleCols(hd * dh, dh) * kc.block(0, hd * dh, pos_ + 1, dh).transpose() * scale;
            s = (s.array() - s.maxCoeff()).exp();
            s /= s.sum();
            o.middleCols(hd * dh, dh) = s * vc.block(0, hd * dh, pos_ + 1, dh);
        }
        x += o * cmat(p, L.wo, d, d);
        rms_norm(x, crow(p, L.norm2, d), h);
        Mat pre = h * cmat(p, L.w1, d, f) + crow(p, L.b1, f);
        x += pre.unaryExpr([](double a) { return gelu(a); }) * cmat(p, L.w2, f, d) + crow(p, L.b2, d);
    }
    rms_norm(x, crow(p, lay.norm_f, d), h);
    Eigen::RowVectorXd logits = h * cmat(p, lay.w_out, d, V) + crow(p, lay.b_out, V);
    ++pos_;
    return logits.transpose();
}

}  // namespace cotforget
