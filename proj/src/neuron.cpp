#include "snrf/neuron.hpp"

#include <algorithm>
#include <charconv>
#include <ostream>
#include <sstream>

#include "snrf/checkpoint.hpp"
#include "snrf/error.hpp"

namespace snrf {

std::string_view to_string(NeuronKind kind) noexcept {
    switch (kind) {
        case NeuronKind::attn_q: return "attn.q";
        case NeuronKind::attn_k: return "attn.k";
        case NeuronKind::attn_v: return "attn.v";
        case NeuronKind::fwd_up: return "fwd.up";
        case NeuronKind::fwd_down: return "fwd.down";
    }
    return "?";
}

NeuronKind parse_neuron_kind(std::string_view text) {
    for (NeuronKind k : kAllNeuronKinds) {
        if (to_string(k) == text) return k;
    }
    throw ParameterError("unknown neuron kind '" + std::string(text) + "'");
}

bool is_attention(NeuronKind kind) noexcept {
    return kind == NeuronKind::attn_q || kind == NeuronKind::attn_k || kind == NeuronKind::attn_v;
}

std::size_t kind_extent(const ModelConfig& config, NeuronKind kind) noexcept {
    return is_attention(kind) ? config.d_model : config.d_inter;
}

namespace {

std::uint32_t parse_u32(std::string_view text, std::string_view what) {
    std::uint32_t value = 0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (text.empty() || ec != std::errc{} || ptr != last) {
        throw ParameterError("invalid " + std::string(what) + " '" + std::string(text) + "'");
    }
    return value;
}

}  // namespace

NeuronId NeuronId::parse(std::string_view text) {
    const auto a = text.find(':');
    const auto b = a == std::string_view::npos ? a : text.find(':', a + 1);
    if (a == std::string_view::npos || b == std::string_view::npos) {
        throw ParameterError("neuron must be L:KIND:IDX, got '" + std::string(text) + "'");
    }
    NeuronId id;
    id.layer = parse_u32(text.substr(0, a), "neuron layer");
    id.kind = parse_neuron_kind(text.substr(a + 1, b - a - 1));
    id.index = parse_u32(text.substr(b + 1), "neuron index");
    return id;
}

std::string NeuronId::to_string() const {
    return std::to_string(layer) + ":" + std::string(snrf::to_string(kind)) + ":" + std::to_string(index);
}

void NeuronId::validate(const ModelConfig& config) const {
    if (layer >= config.n_layers) {
        throw ParameterError("neuron " + to_string() + ": layer out of range (n_layers=" +
                             std::to_string(config.n_layers) + ")");
    }
    const std::size_t extent = kind_extent(config, kind);
    if (index >= extent) {
        throw ParameterError("neuron " + to_string() + ": index out of range (extent " + std::to_string(extent) +
                             ")");
    }
}

std::ostream& operator<<(std::ostream& os, const NeuronId& id) { return os << id.to_string(); }

NeuronSet::NeuronSet(std::vector<NeuronId> members) : members_(std::move(members)) {
    std::sort(members_.begin(), members_.end());
    members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
}

NeuronSet NeuronSet::all(const ModelConfig& config) {
    std::vector<NeuronId> ids;
    for (std::uint32_t l = 0; l < config.n_layers; ++l) {
        for (NeuronKind k : kAllNeuronKinds) {
            const auto extent = static_cast<std::uint32_t>(kind_extent(config, k));
            for (std::uint32_t i = 0; i < extent; ++i) ids.push_back({l, k, i});
        }
    }
    return NeuronSet(std::move(ids));
}

bool NeuronSet::contains(const NeuronId& id) const {
    return std::binary_search(members_.begin(), members_.end(), id);
}

NeuronSet NeuronSet::intersect(const NeuronSet& other) const {
    NeuronSet out;
    std::set_intersection(members_.begin(), members_.end(), other.members_.begin(), other.members_.end(),
                          std::back_inserter(out.members_));
    return out;
}

NeuronSet NeuronSet::unite(const NeuronSet& other) const {
    NeuronSet out;
    std::set_union(members_.begin(), members_.end(), other.members_.begin(), other.members_.end(),
                   std::back_inserter(out.members_));
    return out;
}

NeuronSet NeuronSet::minus(const NeuronSet& other) const {
    NeuronSet out;
    std::set_difference(members_.begin(), members_.end(), other.members_.begin(), other.members_.end(),
                        std::back_inserter(out.members_));
    return out;
}

bool NeuronSet::is_subset_of(const NeuronSet& other) const {
    return std::includes(other.members_.begin(), other.members_.end(), members_.begin(), members_.end());
}

std::vector<std::size_t> NeuronSet::indices(std::uint32_t layer, NeuronKind kind) const {
    std::vector<std::size_t> out;
    const NeuronId lo{layer, kind, 0};
    for (auto it = std::lower_bound(members_.begin(), members_.end(), lo);
         it != members_.end() && it->layer == layer && it->kind == kind; ++it) {
        out.push_back(it->index);
    }
    return out;
}

void NeuronSet::validate(const ModelConfig& config) const {
    for (const auto& id : members_) id.validate(config);
}

std::string format_neuron_set(const NeuronSet& set) {
    std::string out;
    for (const auto& id : set) {
        out += std::to_string(id.layer);
        out += '\t';
        out += to_string(id.kind);
        out += '\t';
        out += std::to_string(id.index);
        out += '\n';
    }
    return out;
}

NeuronSet parse_neuron_set(std::string_view text, const std::string& source) {
    std::vector<NeuronId> ids;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
        try {
            if (t2 == std::string_view::npos) throw ParameterError("expected layer<TAB>kind<TAB>index");
            NeuronId id;
            id.layer = parse_u32(line.substr(0, t1), "layer");
            id.kind = parse_neuron_kind(line.substr(t1 + 1, t2 - t1 - 1));
            id.index = parse_u32(line.substr(t2 + 1), "index");
            ids.push_back(id);
        } catch (const ParameterError& e) {
            throw FormatError(FormatErrc::bad_neuron_set, source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return NeuronSet(std::move(ids));
}

void save_neuron_set(const NeuronSet& set, const std::filesystem::path& path) {
    write_file_text(path, format_neuron_set(set));
}

NeuronSet load_neuron_set(const std::filesystem::path& path) {
    return parse_neuron_set(read_file_text(path), path.string());
}

}  // namespace snrf
