#include "snrf/merge.hpp"

#include <cmath>

namespace snrf {

std::string_view to_string(MergeMethod m) noexcept {
    switch (m) {
        case MergeMethod::snrf: return "snrf";
        case MergeMethod::linear: return "linear";
        case MergeMethod::dare: return "dare";
    }
    return "?";
}

MergeMethod parse_merge_method(std::string_view text) {
    if (text == "snrf") return MergeMethod::snrf;
    if (text == "linear") return MergeMethod::linear;
    if (text == "dare") return MergeMethod::dare;
    throw ParameterError("method must be snrf, linear or dare, got '" + std::string(text) + "'");
}

std::string_view to_string(SvdOrder o) noexcept {
    return o == SvdOrder::full_then_mask ? "full-then-mask" : "mask-then-svd";
}

SvdOrder parse_svd_order(std::string_view text) {
    if (text == "full-then-mask") return SvdOrder::full_then_mask;
    if (text == "mask-then-svd") return SvdOrder::mask_then_svd;
    throw ParameterError("svd order must be full-then-mask or mask-then-svd, got '" + std::string(text) + "'");
}

namespace {

void check_beta(double beta, bool allow_override) {
    if (!std::isfinite(beta)) throw ParameterError("beta must be finite");
    if (!allow_override && (beta < 0.0 || beta > 1.0)) {
        throw ParameterError("beta " + std::to_string(beta) + " outside [0, 1] (use the beta override to allow)");
    }
}

// tgt + update, rounded to float; a zero update leaves the stored bits alone.
float apply_update(float target, double update) {
    if (update == 0.0) return target;
    return static_cast<float>(static_cast<double>(target) + update);
}

}  // namespace

void MergeConfig::validate(const ModelConfig& model) const {
    check_beta(beta, allow_beta_override);
    if (method == MergeMethod::snrf) {
        if (rank == 0) throw ParameterError("rank must be >= 1");
        for (const auto& [name, shape] : canonical_tensor_shapes(model)) {
            if (name == kEmbedName || name == kUnembedName) continue;
            if (rank > std::min(shape.rows, shape.cols)) {
                throw ParameterError("rank " + std::to_string(rank) + " exceeds min dimension of " + name + " (" +
                                     std::to_string(std::min(shape.rows, shape.cols)) + ")");
            }
        }
        shared.validate(model);
    }
    if (method == MergeMethod::dare && !(dare_drop_prob >= 0.0 && dare_drop_prob < 1.0)) {
        throw ParameterError("drop probability must be in [0, 1)");
    }
}

std::map<std::string, Matrix> delta(const WeightMap& src, const WeightMap& tgt) {
    require_same_config(src, tgt);
    std::map<std::string, Matrix> out;
    for (const auto& [name, s] : src.tensors()) {
        const Matrix& t = tgt.at(name);
        Matrix d(s.rows(), s.cols());
        for (std::size_t i = 0; i < d.size(); ++i) d.data()[i] = s.data()[i] - t.data()[i];
        out.emplace(name, std::move(d));
    }
    return out;
}

std::vector<MaskedTensor> tensors_for_group(std::uint32_t layer, NeuronKind kind) {
    switch (kind) {
        case NeuronKind::attn_q: return {{attn_q_name(layer), Axis::cols}};
        case NeuronKind::attn_k: return {{attn_k_name(layer), Axis::cols}};
        case NeuronKind::attn_v: return {{attn_v_name(layer), Axis::cols}};
        case NeuronKind::fwd_up: return {{mlp_up_name(layer), Axis::cols}, {mlp_gate_name(layer), Axis::cols}};
        case NeuronKind::fwd_down: return {{mlp_down_name(layer), Axis::rows}};
    }
    return {};
}

WeightMap snrf_merge(const WeightMap& src, const WeightMap& tgt, const MergeConfig& cfg) {
    require_same_config(src, tgt);
    const auto& model = tgt.config();
    cfg.validate(model);

    std::map<std::string, Matrix> out = tgt.tensors();
    for (std::uint32_t layer = 0; layer < model.n_layers; ++layer) {
        for (NeuronKind kind : kAllNeuronKinds) {
            const auto idx = cfg.shared.indices(layer, kind);
            if (idx.empty()) continue;
            for (const auto& [name, axis] : tensors_for_group(layer, kind)) {
                const MatrixD d = subtract(src.at(name), tgt.at(name));
                MatrixD update;
                if (cfg.svd_order == SvdOrder::full_then_mask) {
                    update = mask_to_neurons(truncate_rank(svd(d, name), cfg.rank), idx, axis);
                } else {
                    const MatrixD masked = mask_to_neurons(d, idx, axis);
                    update = mask_to_neurons(truncate_rank(svd(masked, name), cfg.rank), idx, axis);
                }
                Matrix& w = out.at(name);
                const Matrix& t = tgt.at(name);
                for (std::size_t i = 0; i < w.rows(); ++i) {
                    for (std::size_t j = 0; j < w.cols(); ++j) w(i, j) = apply_update(t(i, j), cfg.beta * update(i, j));
                }
            }
        }
    }
    return WeightMap(model, std::move(out));
}

WeightMap linear_merge(const WeightMap& src, const WeightMap& tgt, double beta, bool allow_beta_override) {
    require_same_config(src, tgt);
    check_beta(beta, allow_beta_override);
    std::map<std::string, Matrix> out = tgt.tensors();
    for (auto& [name, w] : out) {
        const Matrix& s = src.at(name);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double d = static_cast<double>(s.data()[i]) - static_cast<double>(w.data()[i]);
            w.data()[i] = apply_update(w.data()[i], beta * d);
        }
    }
    return WeightMap(tgt.config(), std::move(out));
}

MatrixD drop_and_rescale(const MatrixD& delta, double drop_prob, Rng& rng) {
    if (!(drop_prob >= 0.0 && drop_prob < 1.0)) throw ParameterError("drop probability must be in [0, 1)");
    const double keep_scale = 1.0 / (1.0 - drop_prob);
    MatrixD out = delta;
    for (double& v : out.data()) v = rng.uniform01() < drop_prob ? 0.0 : v * keep_scale;
    return out;
}

WeightMap dare_merge(const WeightMap& src, const WeightMap& tgt, double beta, double drop_prob, std::uint64_t seed,
                     bool allow_beta_override) {
    require_same_config(src, tgt);
    check_beta(beta, allow_beta_override);
    Rng rng(seed);
    std::map<std::string, Matrix> out = tgt.tensors();
    for (auto& [name, w] : out) {
        const MatrixD sparse = drop_and_rescale(subtract(src.at(name), w), drop_prob, rng);
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = apply_update(w.data()[i], beta * sparse.data()[i]);
    }
    return WeightMap(tgt.config(), std::move(out));
}

WeightMap merge(const WeightMap& src, const WeightMap& tgt, const MergeConfig& cfg) {
    switch (cfg.method) {
        case MergeMethod::snrf: return snrf_merge(src, tgt, cfg);
        case MergeMethod::linear: return linear_merge(src, tgt, cfg.beta, cfg.allow_beta_override);
        case MergeMethod::dare:
            cfg.validate(tgt.config());
            return dare_merge(src, tgt, cfg.beta, cfg.dare_drop_prob, cfg.seed, cfg.allow_beta_override);
    }
    throw ParameterError("unknown merge method");
}

}  // namespace snrf
