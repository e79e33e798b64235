#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "snrf/checkpoint.hpp"
#include "snrf/linalg.hpp"
#include "snrf/neuron.hpp"
#include "snrf/rng.hpp"

namespace snrf {

enum class MergeMethod { snrf, linear, dare };
std::string_view to_string(MergeMethod m) noexcept;
MergeMethod parse_merge_method(std::string_view text);

// full-then-mask: truncated SVD of the whole delta, then the neuron mask.
// mask-then-svd: mask the delta first, then truncate (the order the loss
// analysis assumes).
enum class SvdOrder { full_then_mask, mask_then_svd };
std::string_view to_string(SvdOrder o) noexcept;
SvdOrder parse_svd_order(std::string_view text);

struct MergeConfig {
    MergeMethod method = MergeMethod::snrf;
    std::size_t rank = 8;
    double beta = 1.0;
    bool allow_beta_override = false;
    NeuronSet shared;  // SNRF only
    double dare_drop_prob = 0.0;
    std::uint64_t seed = 0;
    SvdOrder svd_order = SvdOrder::full_then_mask;

    void validate(const ModelConfig& model) const;
};

/// Per-tensor W_src - W_tgt (float subtraction) over the canonical set.
std::map<std::string, Matrix> delta(const WeightMap& src, const WeightMap& tgt);

/// Tensors SNRF updates for one neuron group and the axis its neurons occupy.
struct MaskedTensor {
    std::string name;
    Axis axis;
};
std::vector<MaskedTensor> tensors_for_group(std::uint32_t layer, NeuronKind kind);

/// W_tgt + beta * M_S(rank-r truncation of delta), tensor by tensor. Groups
/// with no shared neurons, and the embedding tables, are copied from the
/// target unchanged. Entries outside the masked rows/columns are never
/// touched.
WeightMap snrf_merge(const WeightMap& src, const WeightMap& tgt, const MergeConfig& cfg);

/// W_tgt + beta * (W_src - W_tgt) on every tensor.
WeightMap linear_merge(const WeightMap& src, const WeightMap& tgt, double beta, bool allow_beta_override = false);

/// Drop-and-rescale: each delta entry is zeroed with probability p and the
/// survivors are divided by (1 - p) before the linear update.
WeightMap dare_merge(const WeightMap& src, const WeightMap& tgt, double beta, double drop_prob, std::uint64_t seed,
                     bool allow_beta_override = false);

MatrixD drop_and_rescale(const MatrixD& delta, double drop_prob, Rng& rng);

// Dispatches on cfg.method.
WeightMap merge(const WeightMap& src, const WeightMap& tgt, const MergeConfig& cfg);

}  // namespace snrf
