#pragma once

#include <span>
#include <vector>

#include "snrf/checkpoint.hpp"
#include "snrf/matrix.hpp"
#include "snrf/neuron.hpp"

namespace snrf {

/// Activation-site edit applied during a forward pass. Deactivation zeroes
/// the neuron's activation column; amplification multiplies it by lambda.
struct Intervention {
    enum class Kind { deactivate, amplify };

    Kind kind = Kind::deactivate;
    std::vector<NeuronId> targets;
    double lambda = 0.0;

    static Intervention deactivate(const NeuronSet& set);
    static Intervention deactivate(const NeuronId& id);
    static Intervention amplify(const NeuronId& id, double lambda);

    void validate(const ModelConfig& config) const;
};

// Activations of one layer. All matrices are per position (l rows).
struct LayerTrace {
    MatrixD x_in;    // l x d
    MatrixD q;       // l x d
    MatrixD k;       // l x d
    MatrixD v;       // l x d
    MatrixD scores;  // l x l, QK^T / sqrt(d) before masking
    MatrixD attn;    // l x l, causal row-softmax of scores
    MatrixD y_attn;  // l x d
    MatrixD x_mid;   // l x d, x_in + y_attn
    MatrixD h_act;   // l x d_inter, SiLU(x_mid W_gate) * (x_mid W_up)
    MatrixD y_mlp;   // l x d
};

struct ForwardResult {
    MatrixD hidden;  // l x d, final residual stream
    MatrixD logits;  // l x vocab
    std::vector<LayerTrace> layers;
};

ForwardResult forward(const WeightMap& weights, std::span<const TokenId> tokens,
                      std::span<const Intervention> interventions = {});

// Causal softmax of one score matrix: position i sees positions j <= i.
MatrixD causal_softmax(const MatrixD& scores);

double silu(double x) noexcept;

/// Greedy decoding: appends argmax of the last-position logits (lowest id on
/// ties) until EOS is produced or `max_new` tokens were added. The returned
/// sequence includes the prompt and any EOS that ended generation.
std::vector<TokenId> greedy_decode(const WeightMap& weights, std::span<const TokenId> prompt, std::size_t max_new,
                                   std::span<const Intervention> interventions = {});

/// Copy of `weights` with the parameters that produce or consume each neuron
/// zeroed: attn.q/k/v -> column of W_Q/W_K/W_V, fwd.up -> column of W_up and
/// W_gate, fwd.down -> row of W_down.
WeightMap ablate_weights(const WeightMap& weights, const NeuronSet& set);

}  // namespace snrf
