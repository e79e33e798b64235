#include "snrf/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace snrf {

Intervention Intervention::deactivate(const NeuronSet& set) {
    return {Kind::deactivate, set.members(), 0.0};
}

Intervention Intervention::deactivate(const NeuronId& id) { return {Kind::deactivate, {id}, 0.0}; }

Intervention Intervention::amplify(const NeuronId& id, double lambda) { return {Kind::amplify, {id}, lambda}; }

void Intervention::validate(const ModelConfig& config) const {
    if (kind == Kind::amplify) {
        if (targets.size() != 1) throw ParameterError("amplify intervention must target exactly one neuron");
        if (!(lambda > 0.0) || !std::isfinite(lambda)) {
            throw ParameterError("amplification lambda must be finite and > 0, got " + std::to_string(lambda));
        }
    }
    for (const auto& id : targets) id.validate(config);
}

double silu(double x) noexcept { return x / (1.0 + std::exp(-x)); }

MatrixD causal_softmax(const MatrixD& scores) {
    const std::size_t l = scores.rows();
    MatrixD a(l, l);
    for (std::size_t i = 0; i < l; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= i; ++j) mx = std::max(mx, scores(i, j));
        double total = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
            a(i, j) = std::exp(scores(i, j) - mx);
            total += a(i, j);
        }
        for (std::size_t j = 0; j <= i; ++j) a(i, j) /= total;
    }
    return a;
}

namespace {

// Per-layer multiplicative factors for every activation column.
struct SiteScales {
    std::vector<double> q, k, v, h;
};

std::vector<SiteScales> collect_scales(const ModelConfig& config, std::span<const Intervention> interventions) {
    std::vector<SiteScales> scales(config.n_layers);
    if (interventions.empty()) return scales;
    for (auto& s : scales) {
        s.q.assign(config.d_model, 1.0);
        s.k.assign(config.d_model, 1.0);
        s.v.assign(config.d_model, 1.0);
        s.h.assign(config.d_inter, 1.0);
    }
    for (const auto& iv : interventions) {
        iv.validate(config);
        const double factor = iv.kind == Intervention::Kind::deactivate ? 0.0 : iv.lambda;
        for (const auto& id : iv.targets) {
            auto& s = scales[id.layer];
            switch (id.kind) {
                case NeuronKind::attn_q: s.q[id.index] *= factor; break;
                case NeuronKind::attn_k: s.k[id.index] *= factor; break;
                case NeuronKind::attn_v: s.v[id.index] *= factor; break;
                case NeuronKind::fwd_up:
                case NeuronKind::fwd_down: s.h[id.index] *= factor; break;
            }
        }
    }
    return scales;
}

void scale_columns(MatrixD& m, const std::vector<double>& factors) {
    if (factors.empty()) return;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (factors[j] != 1.0) row[j] *= factors[j];
        }
    }
}

}  // namespace

ForwardResult forward(const WeightMap& weights, std::span<const TokenId> tokens,
                      std::span<const Intervention> interventions) {
    const auto& cfg = weights.config();
    if (tokens.empty()) throw ParameterError("forward: empty token sequence");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] >= cfg.vocab) {
            throw ParameterError("forward: token " + std::to_string(tokens[i]) + " at position " + std::to_string(i) +
                                 " >= vocab " + std::to_string(cfg.vocab));
        }
    }
    const auto scales = collect_scales(cfg, interventions);
    const std::size_t l = tokens.size();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));

    const Matrix& embed = weights.at(std::string(kEmbedName));
    MatrixD x(l, cfg.d_model);
    for (std::size_t i = 0; i < l; ++i) {
        auto src = embed.row(tokens[i]);
        auto dst = x.row(i);
        for (std::size_t j = 0; j < cfg.d_model; ++j) dst[j] = src[j];
    }

    ForwardResult result;
    result.layers.reserve(cfg.n_layers);
    for (std::size_t layer = 0; layer < cfg.n_layers; ++layer) {
        const auto& s = scales[layer];
        LayerTrace t;
        t.x_in = x;
        t.q = matmul(x, weights.at(attn_q_name(layer)));
        t.k = matmul(x, weights.at(attn_k_name(layer)));
        t.v = matmul(x, weights.at(attn_v_name(layer)));
        scale_columns(t.q, s.q);
        scale_columns(t.k, s.k);
        scale_columns(t.v, s.v);

        t.scores = matmul(t.q, t.k.transposed());
        for (double& e : t.scores.data()) e *= inv_sqrt_d;
        t.attn = causal_softmax(t.scores);
        t.y_attn = matmul(t.attn, t.v);
        t.x_mid = add(x, t.y_attn);

        const MatrixD gate = matmul(t.x_mid, weights.at(mlp_gate_name(layer)));
        const MatrixD up = matmul(t.x_mid, weights.at(mlp_up_name(layer)));
        t.h_act = MatrixD(l, cfg.d_inter);
        for (std::size_t i = 0; i < t.h_act.size(); ++i) t.h_act.data()[i] = silu(gate.data()[i]) * up.data()[i];
        scale_columns(t.h_act, s.h);
        t.y_mlp = matmul(t.h_act, weights.at(mlp_down_name(layer)));
        x = add(t.x_mid, t.y_mlp);
        result.layers.push_back(std::move(t));
    }
    result.logits = matmul(x, weights.at(std::string(kUnembedName)));
    result.hidden = std::move(x);
    return result;
}

std::vector<TokenId> greedy_decode(const WeightMap& weights, std::span<const TokenId> prompt, std::size_t max_new,
                                   std::span<const Intervention> interventions) {
    std::vector<TokenId> seq(prompt.begin(), prompt.end());
    for (std::size_t step = 0; step < max_new; ++step) {
        const auto out = forward(weights, seq, interventions);
        auto last = out.logits.row(out.logits.rows() - 1);
        TokenId best = 0;
        for (TokenId t = 1; t < last.size(); ++t) {
            if (last[t] > last[best]) best = t;
        }
        seq.push_back(best);
        if (best == kEosToken) break;
    }
    return seq;
}

WeightMap ablate_weights(const WeightMap& weights, const NeuronSet& set) {
    const auto& cfg = weights.config();
    set.validate(cfg);
    std::map<std::string, Matrix> tensors = weights.tensors();
    auto zero_col = [&](const std::string& name, std::size_t c) {
        Matrix& m = tensors.at(name);
        for (std::size_t i = 0; i < m.rows(); ++i) m(i, c) = 0.0f;
    };
    auto zero_row = [&](const std::string& name, std::size_t r) {
        for (float& e : tensors.at(name).row(r)) e = 0.0f;
    };
    for (const auto& id : set) {
        switch (id.kind) {
            case NeuronKind::attn_q: zero_col(attn_q_name(id.layer), id.index); break;
            case NeuronKind::attn_k: zero_col(attn_k_name(id.layer), id.index); break;
            case NeuronKind::attn_v: zero_col(attn_v_name(id.layer), id.index); break;
            case NeuronKind::fwd_up:
                zero_col(mlp_up_name(id.layer), id.index);
                zero_col(mlp_gate_name(id.layer), id.index);
                break;
            case NeuronKind::fwd_down: zero_row(mlp_down_name(id.layer), id.index); break;
        }
    }
    return WeightMap(cfg, std::move(tensors));
}

}  // namespace snrf
