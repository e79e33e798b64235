#include "snrf/profiler.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "snrf/linalg.hpp"
#include "snrf/parallel.hpp"
#include "snrf/rng.hpp"
#include "text_util.hpp"

namespace snrf {

namespace {

void require_index(std::size_t k, std::size_t extent, const char* what) {
    if (k >= extent) {
        throw ParameterError(std::string(what) + " neuron index " + std::to_string(k) + " out of range (extent " +
                             std::to_string(extent) + ")");
    }
}

}  // namespace

double impact_ffn(const LayerTrace& trace, const WeightMap& weights, std::size_t layer, std::size_t k) {
    if (layer >= weights.config().n_layers) throw ParameterError("impact_ffn: layer out of range");
    require_index(k, trace.h_act.cols(), "fwd");
    double h2 = 0.0;
    for (std::size_t i = 0; i < trace.h_act.rows(); ++i) h2 += trace.h_act(i, k) * trace.h_act(i, k);
    double w2 = 0.0;
    for (float w : weights.at(mlp_down_name(layer)).row(k)) w2 += static_cast<double>(w) * w;
    return h2 * w2;
}

double impact_value(const LayerTrace& trace, std::size_t k) {
    require_index(k, trace.v.cols(), "attn.v");
    double total = 0.0;
    for (std::size_t i = 0; i < trace.attn.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j <= i; ++j) s += trace.attn(i, j) * trace.v(j, k);
        total += s * s;
    }
    return total;
}

double impact_query(const LayerTrace& trace, std::size_t k) {
    require_index(k, trace.q.cols(), "attn.q/attn.k");
    const std::size_t l = trace.scores.rows();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(trace.q.cols()));
    MatrixD shifted = trace.scores;
    for (std::size_t i = 0; i < l; ++i)
        for (std::size_t j = 0; j < l; ++j) shifted(i, j) -= trace.q(i, k) * trace.k(j, k) * inv_sqrt_d;
    const MatrixD attn_ablated = causal_softmax(shifted);
    const MatrixD diff = subtract(trace.attn, attn_ablated);
    return frobenius_norm_squared(matmul(diff, trace.v));
}

double impact_key(const LayerTrace& trace, std::size_t k) { return impact_query(trace, k); }

double full_model_impact(const WeightMap& weights, std::span<const TokenId> context, const NeuronId& neuron) {
    neuron.validate(weights.config());
    const auto intact = forward(weights, context);
    const Intervention iv = Intervention::deactivate(neuron);
    const auto ablated = forward(weights, context, std::span(&iv, 1));
    return std::sqrt(frobenius_norm_squared(subtract(intact.hidden, ablated.hidden)));
}

std::string_view to_string(ImpactMode mode) noexcept {
    return mode == ImpactMode::layer_local ? "layer-local" : "full";
}

ImpactMode parse_impact_mode(std::string_view text) {
    if (text == "layer-local") return ImpactMode::layer_local;
    if (text == "full" || text == "full-model") return ImpactMode::full_model;
    throw ParameterError("mode must be layer-local or full, got '" + std::string(text) + "'");
}

ImpactReport profile_context(const WeightMap& weights, std::size_t context_id, std::span<const TokenId> context,
                             ImpactMode mode) {
    const auto& cfg = weights.config();
    ImpactReport report;
    report.context_id = context_id;
    report.mode = mode;
    const std::vector<NeuronId> neurons = NeuronSet::all(cfg).members();
    std::vector<double> values(neurons.size());

    if (mode == ImpactMode::layer_local) {
        const auto out = forward(weights, context);
        parallel_for(neurons.size(), [&](std::size_t i) {
            const NeuronId& n = neurons[i];
            const LayerTrace& t = out.layers[n.layer];
            switch (n.kind) {
                case NeuronKind::attn_q: values[i] = impact_query(t, n.index); break;
                case NeuronKind::attn_k: values[i] = impact_key(t, n.index); break;
                case NeuronKind::attn_v: values[i] = impact_value(t, n.index); break;
                case NeuronKind::fwd_up:
                case NeuronKind::fwd_down: values[i] = impact_ffn(t, weights, n.layer, n.index); break;
            }
        });
    } else {
        const auto intact = forward(weights, context);
        parallel_for(neurons.size(), [&](std::size_t i) {
            const Intervention iv = Intervention::deactivate(neurons[i]);
            const auto ablated = forward(weights, context, std::span(&iv, 1));
            values[i] = std::sqrt(frobenius_norm_squared(subtract(intact.hidden, ablated.hidden)));
        });
    }
    for (std::size_t i = 0; i < neurons.size(); ++i) report.impacts.emplace(neurons[i], values[i]);
    return report;
}

Selector Selector::parse(std::string_view text) {
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) throw ParameterError("selector must be top:P or abs:SIGMA");
    const auto head = text.substr(0, colon);
    const auto tail = text.substr(colon + 1);
    double v = 0.0;
    if (tail == "inf" || tail == "+inf") {
        v = std::numeric_limits<double>::infinity();
    } else if (!detail::parse_number(tail, v)) {
        throw ParameterError("selector value '" + std::string(tail) + "' is not a number");
    }
    Selector s;
    if (head == "top") {
        s = top_fraction(v);
    } else if (head == "abs") {
        s = absolute(v);
    } else {
        throw ParameterError("selector must be top:P or abs:SIGMA, got '" + std::string(text) + "'");
    }
    s.validate();
    return s;
}

std::string Selector::to_string() const {
    const std::string v = std::isinf(value) ? "inf" : detail::format_double(value);
    return (kind == Kind::top_fraction ? "top:" : "abs:") + v;
}

void Selector::validate() const {
    if (kind == Kind::top_fraction) {
        if (!(value > 0.0 && value <= 1.0)) throw ParameterError("top fraction must be in (0, 1]");
    } else if (std::isnan(value) || value < 0.0) {
        throw ParameterError("absolute threshold must be >= 0");
    }
}

NeuronSet activated_neurons(const ImpactReport& report, const Selector& selector) {
    selector.validate();
    std::vector<NeuronId> keep;
    if (selector.kind == Selector::Kind::absolute) {
        for (const auto& [id, impact] : report.impacts) {
            if (impact >= selector.value) keep.push_back(id);
        }
        return NeuronSet(std::move(keep));
    }
    std::map<NeuronGroup, std::vector<std::pair<double, std::uint32_t>>> groups;
    for (const auto& [id, impact] : report.impacts) groups[{id.layer, id.kind}].emplace_back(impact, id.index);
    for (auto& [group, entries] : groups) {
        // The small slack keeps products like 0.1 * 30 from rounding up to an extra neuron.
        const double want = std::ceil(selector.value * static_cast<double>(entries.size()) - 1e-9);
        const auto count = std::min(entries.size(), static_cast<std::size_t>(std::max(0.0, want)));
        std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t i = 0; i < count; ++i) keep.push_back({group.first, group.second, entries[i].second});
    }
    return NeuronSet(std::move(keep));
}

NeuronSet context_neurons(std::span<const ImpactReport> reports, const Selector& selector) {
    if (reports.empty()) throw ParameterError("context_neurons: no reports");
    for (const auto& r : reports) {
        if (r.mode != reports.front().mode) throw ParameterError("context_neurons: cannot mix impact modes");
    }
    NeuronSet out = activated_neurons(reports.front(), selector);
    for (std::size_t i = 1; i < reports.size(); ++i) out = out.intersect(activated_neurons(reports[i], selector));
    return out;
}

NeuronSet context_neurons(const WeightMap& weights, const ProbeCorpus& corpus, const Selector& selector,
                          ImpactMode mode) {
    std::vector<ImpactReport> reports;
    reports.reserve(corpus.contexts.size());
    for (std::size_t c = 0; c < corpus.contexts.size(); ++c) {
        reports.push_back(profile_context(weights, c, corpus.contexts[c], mode));
    }
    return context_neurons(reports, selector);
}

NeuronSet shared_neurons(const NeuronSet& a, const NeuronSet& b) { return a.intersect(b); }

OverlapStats overlap_stats(std::size_t shared, std::size_t only_a, std::size_t only_b) {
    OverlapStats s;
    s.shared = shared;
    s.only_a = only_a;
    s.only_b = only_b;
    s.union_size = shared + only_a + only_b;
    if (s.union_size > 0) {
        const double u = static_cast<double>(s.union_size);
        s.shared_pct = 100.0 * static_cast<double>(shared) / u;
        s.only_a_pct = 100.0 * static_cast<double>(only_a) / u;
        s.only_b_pct = 100.0 * static_cast<double>(only_b) / u;
    }
    return s;
}

OverlapStats overlap_stats(const NeuronSet& a, const NeuronSet& b) {
    const std::size_t shared = a.intersect(b).size();
    return overlap_stats(shared, a.size() - shared, b.size() - shared);
}

std::string overlap_stats_json(const OverlapStats& s) {
    nlohmann::json j;
    j["shared"] = s.shared;
    j["only_a"] = s.only_a;
    j["only_b"] = s.only_b;
    j["union"] = s.union_size;
    j["shared_pct"] = s.shared_pct;
    j["only_a_pct"] = s.only_a_pct;
    j["only_b_pct"] = s.only_b_pct;
    return j.dump(2) + "\n";
}

GroupCounts layer_module_histogram(const NeuronSet& set) {
    GroupCounts counts;
    for (const auto& id : set) ++counts[{id.layer, id.kind}];
    return counts;
}

std::string histogram_csv(const GroupCounts& counts) {
    std::string out = "layer,kind,count\n";
    for (const auto& [group, n] : counts) {
        out += std::to_string(group.first) + "," + std::string(to_string(group.second)) + "," + std::to_string(n) + "\n";
    }
    return out;
}

std::string histogram_csv(const GroupCounts& counts, const ModelConfig& config) {
    GroupCounts full;
    for (std::uint32_t l = 0; l < config.n_layers; ++l)
        for (NeuronKind k : kAllNeuronKinds) full[{l, k}] = 0;
    for (const auto& [group, n] : counts) full[group] = n;
    return histogram_csv(full);
}

NeuronSet random_neuron_set(const GroupCounts& budget, const ModelConfig& config, std::uint64_t seed) {
    std::vector<NeuronId> ids;
    for (const auto& [group, want] : budget) {
        const auto [layer, kind] = group;
        if (layer >= config.n_layers) throw ParameterError("random_neuron_set: layer " + std::to_string(layer) + " out of range");
        const std::size_t extent = kind_extent(config, kind);
        if (want > extent) {
            throw ParameterError("random_neuron_set: budget " + std::to_string(want) + " exceeds group size " +
                                 std::to_string(extent) + " for layer " + std::to_string(layer) + " " +
                                 std::string(to_string(kind)));
        }
        // Independent stream per group, so one group's budget never shifts another's sample.
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(layer) * 8 + static_cast<std::uint64_t>(kind)));
        std::vector<std::uint32_t> pool(extent);
        for (std::size_t i = 0; i < extent; ++i) pool[i] = static_cast<std::uint32_t>(i);
        for (std::size_t i = 0; i < want; ++i) {
            const std::size_t j = i + rng.below(extent - i);
            std::swap(pool[i], pool[j]);
            ids.push_back({layer, kind, pool[i]});
        }
    }
    return NeuronSet(std::move(ids));
}

std::string format_impact_report(const ImpactReport& report) {
    std::string out = "context_id,layer,kind,index,impact,mode\n";
    const std::string mode(to_string(report.mode));
    const std::string ctx = std::to_string(report.context_id);
    for (const auto& [id, impact] : report.impacts) {
        out += ctx + "," + std::to_string(id.layer) + "," + std::string(to_string(id.kind)) + "," +
               std::to_string(id.index) + "," + detail::format_double(impact) + "," + mode + "\n";
    }
    return out;
}

std::vector<ImpactReport> parse_impact_reports(std::string_view text, const std::string& source) {
    const auto lines = detail::lines_of(text);
    auto fail = [&](std::size_t line_no, const std::string& msg) -> FormatError {
        return FormatError(FormatErrc::bad_report, source + ":" + std::to_string(line_no) + ": " + msg);
    };
    if (lines.empty() || lines.front().second != "context_id,layer,kind,index,impact,mode") {
        throw fail(lines.empty() ? 1 : lines.front().first, "missing impact report header");
    }
    std::vector<ImpactReport> reports;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto [line_no, line] = lines[li];
        const auto f = detail::split(line, ',');
        if (f.size() != 6) throw fail(line_no, "expected 6 fields");
        std::size_t ctx = 0;
        NeuronId id;
        double impact = 0.0;
        if (!detail::parse_number(f[0], ctx) || !detail::parse_number(f[1], id.layer) ||
            !detail::parse_number(f[3], id.index) || !detail::parse_number(f[4], impact)) {
            throw fail(line_no, "malformed number");
        }
        ImpactMode mode;
        try {
            id.kind = parse_neuron_kind(f[2]);
            mode = parse_impact_mode(f[5]);
        } catch (const ParameterError& e) {
            throw fail(line_no, e.what());
        }
        if (!std::isfinite(impact) || impact < 0.0) throw fail(line_no, "impact must be finite and >= 0");
        if (reports.empty() || reports.back().context_id != ctx) {
            reports.push_back({ctx, mode, {}});
        } else if (reports.back().mode != mode) {
            throw fail(line_no, "mixed modes within one context");
        }
        if (!reports.back().impacts.emplace(id, impact).second) throw fail(line_no, "duplicate neuron " + id.to_string());
    }
    return reports;
}

}  // namespace snrf
