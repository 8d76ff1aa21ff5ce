#pragma once

#include "pdvf/linalg.hpp"
#include "pdvf/rng.hpp"
#include "pdvf/tape.hpp"

#include <Eigen/QR>

#include <string>
#include <vector>

namespace pdvf {

enum class Act { None, Tanh, Relu };

struct LayerSpec {
    int in = 0;
    int out = 0;
    Act act = Act::None;
};

struct MlpSpec {
    std::vector<LayerSpec> layers;

    static MlpSpec make(int in, const std::vector<int>& hidden, int out,
                        Act hidden_act, Act out_act = Act::None) {
        MlpSpec s;
        int prev = in;
        for (int h : hidden) {
            s.layers.push_back({prev, h, hidden_act});
            prev = h;
        }
        s.layers.push_back({prev, out, out_act});
        return s;
    }
    int in_dim() const { return layers.front().in; }
    int out_dim() const { return layers.back().out; }
};

// Fill a matrix with (semi-)orthogonal rows/cols scaled by gain; the usual
// PPO initialization. Falls back to the QR of a Gaussian draw.
template <typename S>
Mat<S> orthogonal_init(Eigen::Index rows, Eigen::Index cols, S gain, Rng& rng) {
    Eigen::Index n = std::max(rows, cols);
    Mat<S> g(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < n; ++c) g(r, c) = static_cast<S>(rng.normal());
    Eigen::HouseholderQR<Mat<S>> qr(g);
    Mat<S> q = qr.householderQ() * Mat<S>::Identity(n, n);
    Mat<S> r = qr.matrixQR().template triangularView<Eigen::Upper>();
    for (Eigen::Index c = 0; c < n; ++c)
        if (r(c, c) < S(0)) q.col(c) = -q.col(c);
    return gain * q.topLeftCorner(rows, cols);
}

template <typename S>
Mat<S> uniform_init(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    S bound = S(1) / std::sqrt(static_cast<S>(rows));
    Mat<S> m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = static_cast<S>(rng.uniform(-bound, bound));
    return m;
}

inline std::string act_name(Act a) {
    switch (a) {
        case Act::Tanh: return "tanh";
        case Act::Relu: return "relu";
        default: return "none";
    }
}

// ---------------------------------------------------------------------------
// MLP

template <typename S>
void init_mlp(ParamSet<S>& params, const std::string& prefix, const MlpSpec& spec,
              Rng& rng, bool orthogonal = false, S head_gain = S(1)) {
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        Tensor<S> w(prefix + ".w" + std::to_string(i), uint32_t(l.in), uint32_t(l.out));
        if (orthogonal) {
            bool last = i + 1 == spec.layers.size();
            S gain = last ? head_gain : S(std::sqrt(2.0));
            w.value = orthogonal_init<S>(l.in, l.out, gain, rng);
        } else {
            w.value = uniform_init<S>(l.in, l.out, rng);
        }
        params.add(std::move(w));
        params.add_vector(prefix + ".b" + std::to_string(i), uint32_t(l.out));
    }
}

template <typename S>
typename Tape<S>::Id mlp_forward(Tape<S>& tape, ParamSet<S>& params,
                                 const std::string& prefix, const MlpSpec& spec,
                                 typename Tape<S>::Id x) {
    require(tape.val(x).cols() == spec.layers.front().in,
            "mlp_forward(", prefix, "): layer 0 expects input dim ",
            spec.layers.front().in, ", got ", tape.val(x).cols());
    auto h = x;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        auto w = tape.param(params.at(prefix + ".w" + std::to_string(i)));
        auto b = tape.param(params.at(prefix + ".b" + std::to_string(i)));
        require(tape.val(h).cols() == l.in, "mlp_forward(", prefix, "): layer ", i,
                " expects input dim ", l.in, ", got ", tape.val(h).cols());
        h = tape.add_rowwise(tape.matmul(h, w), b);
        if (l.act == Act::Tanh) h = tape.tanh_(h);
        if (l.act == Act::Relu) h = tape.relu(h);
    }
    return h;
}

// Gradient-free forward for rollouts and inference.
template <typename S>
Mat<S> mlp_eval(const ParamSet<S>& params, const std::string& prefix,
                const MlpSpec& spec, const Mat<S>& x) {
    require(x.cols() == spec.layers.front().in, "mlp_eval(", prefix,
            "): layer 0 expects input dim ", spec.layers.front().in, ", got ",
            x.cols());
    Mat<S> h = x;
    for (size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        const auto& w = params.at(prefix + ".w" + std::to_string(i)).value;
        const auto& b = params.at(prefix + ".b" + std::to_string(i)).value;
        require(h.cols() == l.in, "mlp_eval(", prefix, "): layer ", i,
                " expects input dim ", l.in, ", got ", h.cols());
        h = (h * w).rowwise() + b.row(0);
        if (l.act == Act::Tanh) h = h.array().tanh();
        if (l.act == Act::Relu) h = h.cwiseMax(S(0));
    }
    return h;
}

// ---------------------------------------------------------------------------
// Set encoder: input embedding -> one self-attention sublayer -> one
// feed-forward sublayer (each as dropout(layernorm(x + sub(x)))) -> mean pool
// over the set -> linear projection -> unit l2 normalization. No positional
// information anywhere, so the output is permutation invariant.

struct SetEncoderSpec {
    int in = 0;       // element dim
    int d_model = 64;
    int ff_hidden = 64;
    int d_emb = 8;
    float dropout = 0.1f;
};

template <typename S>
void init_set_encoder(ParamSet<S>& params, const std::string& prefix,
                      const SetEncoderSpec& spec, Rng& rng) {
    auto lin = [&](const std::string& name, int in, int out) {
        Tensor<S> w(prefix + "." + name + "_w", uint32_t(in), uint32_t(out));
        w.value = uniform_init<S>(in, out, rng);
        params.add(std::move(w));
        params.add_vector(prefix + "." + name + "_b", uint32_t(out));
    };
    lin("embed", spec.in, spec.d_model);
    lin("wq", spec.d_model, spec.d_model);
    lin("wk", spec.d_model, spec.d_model);
    lin("wv", spec.d_model, spec.d_model);
    lin("wo", spec.d_model, spec.d_model);
    lin("ff1", spec.d_model, spec.ff_hidden);
    lin("ff2", spec.ff_hidden, spec.d_model);
    lin("proj", spec.d_model, spec.d_emb);
    for (const char* ln : {"ln1", "ln2"}) {
        Tensor<S> g(prefix + "." + ln + "_g", uint32_t(spec.d_model));
        g.value.setOnes();
        params.add(std::move(g));
        params.add_vector(prefix + "." + ln + "_b", uint32_t(spec.d_model));
    }
}

// Batched forward over B sets packed row-wise into `elements`;
// offsets[i]..offsets[i+1] delimit set i. Returns a B x d_emb node of
// unit-norm embeddings. With train=false the dropout is skipped and the
// result is a pure function of the inputs.
template <typename S>
typename Tape<S>::Id set_encoder_forward(Tape<S>& tape, ParamSet<S>& params,
                                         const std::string& prefix,
                                         const SetEncoderSpec& spec,
                                         typename Tape<S>::Id elements,
                                         const std::vector<Eigen::Index>& offsets,
                                         bool train = false, Rng* rng = nullptr) {
    require(offsets.size() >= 2, "set_encoder_forward: need at least one set");
    for (size_t i = 0; i + 1 < offsets.size(); ++i)
        require(offsets[i + 1] > offsets[i], "set_encoder_forward: empty set ", i);
    require(tape.val(elements).allFinite(), "set_encoder_forward: non-finite input");
    require(tape.val(elements).cols() == spec.in,
            "set_encoder_forward: element dim ", tape.val(elements).cols(),
            ", expected ", spec.in);

    auto lin = [&](typename Tape<S>::Id x, const std::string& name) {
        auto w = tape.param(params.at(prefix + "." + name + "_w"));
        auto b = tape.param(params.at(prefix + "." + name + "_b"));
        return tape.add_rowwise(tape.matmul(x, w), b);
    };
    auto drop = [&](typename Tape<S>::Id x) {
        if (!train || spec.dropout <= 0) return x;
        require(rng, "set_encoder_forward: train mode needs an rng");
        Mat<S> mask(tape.val(x).rows(), tape.val(x).cols());
        for (Eigen::Index r = 0; r < mask.rows(); ++r)
            for (Eigen::Index c = 0; c < mask.cols(); ++c)
                mask(r, c) = rng->bernoulli(spec.dropout) ? S(0) : S(1);
        return tape.dropout(x, mask, S(spec.dropout));
    };

    auto x = lin(elements, "embed");
    auto q = lin(x, "wq"), k = lin(x, "wk"), v = lin(x, "wv");
    S inv_sqrt_d = S(1) / std::sqrt(static_cast<S>(spec.d_model));
    std::vector<typename Tape<S>::Id> heads;
    for (size_t i = 0; i + 1 < offsets.size(); ++i) {
        Eigen::Index b = offsets[i], n = offsets[i + 1] - offsets[i];
        auto qi = tape.rows(q, b, n);
        auto ki = tape.rows(k, b, n);
        auto vi = tape.rows(v, b, n);
        auto scores = tape.scale(tape.matmul(qi, tape.transpose(ki)), inv_sqrt_d);
        heads.push_back(tape.matmul(tape.softmax_rows(scores), vi));
    }
    auto attn = lin(tape.concat_rows(heads), "wo");
    auto ln1g = tape.param(params.at(prefix + ".ln1_g"));
    auto ln1b = tape.param(params.at(prefix + ".ln1_b"));
    auto x1 = drop(tape.layernorm_rows(tape.add(x, attn), ln1g, ln1b));

    auto ff = lin(tape.relu(lin(x1, "ff1")), "ff2");
    auto ln2g = tape.param(params.at(prefix + ".ln2_g"));
    auto ln2b = tape.param(params.at(prefix + ".ln2_b"));
    auto x2 = drop(tape.layernorm_rows(tape.add(x1, ff), ln2g, ln2b));

    auto pooled = tape.segment_mean(x2, offsets);
    return tape.l2norm_rows(lin(pooled, "proj"));
}

// Single-set eval-mode convenience; elements one per row.
template <typename S>
Vec<S> set_encoder_eval(ParamSet<S>& params, const std::string& prefix,
                        const SetEncoderSpec& spec, const Mat<S>& elements) {
    require(elements.rows() >= 1, "set_encoder_eval: empty set");
    Tape<S> tape;
    auto x = tape.leaf(elements);
    auto z = set_encoder_forward(tape, params, prefix, spec, x,
                                 {0, elements.rows()}, false, nullptr);
    return tape.val(z).row(0).transpose();
}

// ---------------------------------------------------------------------------
// Value trunk: concat(s0, z_d) -> 64 relu -> 64 tanh -> d^2 linear, reshaped
// into a lower-triangular L with A = L L^T scoring policy embeddings.

struct ValueTrunkSpec {
    int state_dim = 0;
    int d_emb_dynamics = 0;
    int d_emb_policy = 0;
    int hidden = 64;

    MlpSpec mlp() const {
        MlpSpec s;
        s.layers = {{state_dim + d_emb_dynamics, hidden, Act::Relu},
                    {hidden, hidden, Act::Tanh},
                    {hidden, d_emb_policy * d_emb_policy, Act::None}};
        return s;
    }
};

template <typename S>
void init_value_trunk(ParamSet<S>& params, const std::string& prefix,
                      const ValueTrunkSpec& spec, Rng& rng) {
    init_mlp(params, prefix, spec.mlp(), rng);
}

// Predicted return for each row: G_i = z_i^T A(s_i, zd_i) z_i >= 0.
template <typename S>
typename Tape<S>::Id value_trunk_forward(Tape<S>& tape, ParamSet<S>& params,
                                         const std::string& prefix,
                                         const ValueTrunkSpec& spec,
                                         typename Tape<S>::Id s0_zd,
                                         typename Tape<S>::Id z_pi) {
    auto lrows = mlp_forward(tape, params, prefix, spec.mlp(), s0_zd);
    return tape.quad_form_rows(lrows, z_pi);
}

// Eval-mode assembly of L for one (s0, z_d).
template <typename S>
Mat<S> value_trunk_L(const ParamSet<S>& params, const std::string& prefix,
                     const ValueTrunkSpec& spec, const Vec<S>& s0,
                     const Vec<S>& z_d) {
    require(s0.size() == spec.state_dim, "value_trunk_L: state dim ", s0.size(),
            ", expected ", spec.state_dim);
    require(z_d.size() == spec.d_emb_dynamics, "value_trunk_L: z_d dim ",
            z_d.size(), ", expected ", spec.d_emb_dynamics);
    Mat<S> in(1, s0.size() + z_d.size());
    in << s0.transpose(), z_d.transpose();
    Mat<S> row = mlp_eval(params, prefix, spec.mlp(), in);
    return lower_triangular_assemble<S>(Vec<S>(row.row(0).transpose()));
}

}  // namespace pdvf
