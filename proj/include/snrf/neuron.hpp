#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "snrf/model_config.hpp"

namespace snrf {

// Declaration order is the canonical sort order.
enum class NeuronKind : std::uint8_t { attn_q, attn_k, attn_v, fwd_up, fwd_down };

inline constexpr std::array<NeuronKind, 5> kAllNeuronKinds = {
    NeuronKind::attn_q, NeuronKind::attn_k, NeuronKind::attn_v, NeuronKind::fwd_up, NeuronKind::fwd_down};

std::string_view to_string(NeuronKind kind) noexcept;
NeuronKind parse_neuron_kind(std::string_view text);  // "attn.q" ... "fwd.down"
bool is_attention(NeuronKind kind) noexcept;

// Number of neurons of `kind` in one layer.
std::size_t kind_extent(const ModelConfig& config, NeuronKind kind) noexcept;

struct NeuronId {
    std::uint32_t layer = 0;
    NeuronKind kind = NeuronKind::attn_q;
    std::uint32_t index = 0;

    friend auto operator<=>(const NeuronId&, const NeuronId&) = default;

    // "L:KIND:IDX", e.g. "14:fwd.up:12953".
    static NeuronId parse(std::string_view text);
    std::string to_string() const;
    void validate(const ModelConfig& config) const;
};

std::ostream& operator<<(std::ostream& os, const NeuronId& id);

// (layer, kind) pair identifying one weight matrix's neuron group.
using NeuronGroup = std::pair<std::uint32_t, NeuronKind>;

/// Sorted, de-duplicated neuron collection.
class NeuronSet {
public:
    NeuronSet() = default;
    explicit NeuronSet(std::vector<NeuronId> members);

    static NeuronSet all(const ModelConfig& config);

    std::size_t size() const noexcept { return members_.size(); }
    bool empty() const noexcept { return members_.empty(); }
    bool contains(const NeuronId& id) const;
    const std::vector<NeuronId>& members() const noexcept { return members_; }
    auto begin() const noexcept { return members_.begin(); }
    auto end() const noexcept { return members_.end(); }

    NeuronSet intersect(const NeuronSet& other) const;
    NeuronSet unite(const NeuronSet& other) const;
    NeuronSet minus(const NeuronSet& other) const;
    bool is_subset_of(const NeuronSet& other) const;

    // Indices in one (layer, kind) group, ascending.
    std::vector<std::size_t> indices(std::uint32_t layer, NeuronKind kind) const;

    void validate(const ModelConfig& config) const;

    friend bool operator==(const NeuronSet&, const NeuronSet&) = default;

private:
    std::vector<NeuronId> members_;
};

// Lines "layer<TAB>kind<TAB>index", sorted.
std::string format_neuron_set(const NeuronSet& set);
NeuronSet parse_neuron_set(std::string_view text, const std::string& source = "<memory>");
void save_neuron_set(const NeuronSet& set, const std::filesystem::path& path);
NeuronSet load_neuron_set(const std::filesystem::path& path);

}  // namespace snrf
