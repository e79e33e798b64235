#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "snrf/checkpoint.hpp"
#include "snrf/model.hpp"
#include "snrf/neuron.hpp"

namespace snrf {

// ---- Layer-local impacts -------------------------------------------------
//
// Each function scores one neuron from a single intact forward trace by the
// squared Frobenius change of its own layer's output when the neuron's
// activation column is zeroed. No re-execution is needed.

// ||H_act[:,k]||^2 * ||W_down[k,:]||^2. Shared by fwd.up(l,k) and fwd.down(l,k).
double impact_ffn(const LayerTrace& trace, const WeightMap& weights, std::size_t layer, std::size_t k);

// ||A V[:,k]||^2.
double impact_value(const LayerTrace& trace, std::size_t k);

// ||(A - A') V||^2 with A' the causal softmax of scores - Q[:,k] K[:,k]^T / sqrt(d).
double impact_query(const LayerTrace& trace, std::size_t k);

// Same quantity as impact_query: removing either factor of the rank-one
// score term Q[:,k] K[:,k]^T has the identical effect.
double impact_key(const LayerTrace& trace, std::size_t k);

/// ||hidden(x) - hidden_ablated(x)||_2 over all positions, flattened. Exact
/// but needs one extra forward pass per neuron.
double full_model_impact(const WeightMap& weights, std::span<const TokenId> context, const NeuronId& neuron);

// ---- Reports and selection ----------------------------------------------

enum class ImpactMode { layer_local, full_model };

std::string_view to_string(ImpactMode mode) noexcept;
ImpactMode parse_impact_mode(std::string_view text);  // "layer-local" | "full"

struct ImpactReport {
    std::size_t context_id = 0;
    ImpactMode mode = ImpactMode::layer_local;
    std::map<NeuronId, double> impacts;

    friend bool operator==(const ImpactReport&, const ImpactReport&) = default;
};

/// One impact per addressable neuron of the model.
ImpactReport profile_context(const WeightMap& weights, std::size_t context_id, std::span<const TokenId> context,
                             ImpactMode mode);

struct Selector {
    enum class Kind { absolute, top_fraction };
    Kind kind = Kind::top_fraction;
    double value = 0.005;

    static Selector absolute(double sigma) { return {Kind::absolute, sigma}; }
    static Selector top_fraction(double p) { return {Kind::top_fraction, p}; }
    static Selector never() { return absolute(std::numeric_limits<double>::infinity()); }

    // "top:P" or "abs:SIGMA" ("abs:inf" selects nothing).
    static Selector parse(std::string_view text);
    std::string to_string() const;
    void validate() const;
};

/// Absolute mode keeps impacts >= sigma. Top-fraction mode keeps the
/// ceil(p * group size) highest impacts of every (layer, kind) group, lower
/// index first on ties.
NeuronSet activated_neurons(const ImpactReport& report, const Selector& selector);

/// Neurons activated on every context (intersection over per-context
/// selections). All reports must share one mode.
NeuronSet context_neurons(std::span<const ImpactReport> reports, const Selector& selector);
NeuronSet context_neurons(const WeightMap& weights, const ProbeCorpus& corpus, const Selector& selector,
                          ImpactMode mode = ImpactMode::layer_local);

NeuronSet shared_neurons(const NeuronSet& a, const NeuronSet& b);

struct OverlapStats {
    std::size_t shared = 0;
    std::size_t only_a = 0;
    std::size_t only_b = 0;
    std::size_t union_size = 0;
    double shared_pct = 0.0;
    double only_a_pct = 0.0;
    double only_b_pct = 0.0;
};

// Percentages are of the union; all zero when the union is empty.
OverlapStats overlap_stats(std::size_t shared, std::size_t only_a, std::size_t only_b);
OverlapStats overlap_stats(const NeuronSet& a, const NeuronSet& b);
std::string overlap_stats_json(const OverlapStats& stats);

using GroupCounts = std::map<NeuronGroup, std::size_t>;

GroupCounts layer_module_histogram(const NeuronSet& set);

// CSV "layer,kind,count". With a config, every group is listed (zeros included).
std::string histogram_csv(const GroupCounts& counts);
std::string histogram_csv(const GroupCounts& counts, const ModelConfig& config);

/// Uniform sampling without replacement inside each (layer, kind) group,
/// exactly `budget` neurons per group.
NeuronSet random_neuron_set(const GroupCounts& budget, const ModelConfig& config, std::uint64_t seed);

// ---- Report I/O ----------------------------------------------------------

// CSV "context_id,layer,kind,index,impact,mode"; impacts printed with 17
// significant digits so parsing restores the exact doubles.
std::string format_impact_report(const ImpactReport& report);
std::vector<ImpactReport> parse_impact_reports(std::string_view text, const std::string& source = "<memory>");

}  // namespace snrf
