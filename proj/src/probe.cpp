#include "snrf/probe.hpp"

#include <algorithm>

#include "snrf/model.hpp"
#include "snrf/parallel.hpp"
#include "text_util.hpp"

namespace snrf {

std::vector<std::vector<TokenId>> probe_prompts(const ProbeCorpus& corpus) {
    std::vector<std::vector<TokenId>> prompts;
    prompts.reserve(corpus.contexts.size());
    for (const auto& ctx : corpus.contexts) {
        auto sep = std::find(ctx.begin(), ctx.end(), kSepToken);
        prompts.emplace_back(ctx.begin(), sep == ctx.end() ? ctx.end() : sep + 1);
    }
    return prompts;
}

std::vector<std::vector<TokenId>> amplified_generate(const WeightMap& weights,
                                                     const std::vector<std::vector<TokenId>>& prompts,
                                                     const NeuronId& neuron, double lambda, std::size_t max_new) {
    const Intervention iv = Intervention::amplify(neuron, lambda);
    iv.validate(weights.config());
    std::vector<std::vector<TokenId>> out(prompts.size());
    parallel_for(prompts.size(), [&](std::size_t i) {
        auto seq = greedy_decode(weights, prompts[i], max_new, std::span(&iv, 1));
        out[i].assign(seq.begin() + static_cast<std::ptrdiff_t>(prompts[i].size()), seq.end());
    });
    return out;
}

std::size_t FrequencyReport::total_count() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.count;
    return n;
}

FrequencyReport token_frequency(const std::vector<std::vector<TokenId>>& generations,
                                const std::vector<std::vector<TokenId>>& baseline,
                                const std::map<TokenId, std::string>& vocab_names) {
    std::map<TokenId, std::pair<std::size_t, std::size_t>> counts;
    for (const auto& g : generations)
        for (TokenId t : g) ++counts[t].first;
    for (const auto& g : baseline)
        for (TokenId t : g) ++counts[t].second;

    FrequencyReport report;
    for (const auto& [token, c] : counts) {
        FrequencyRow row;
        row.token = token;
        if (auto it = vocab_names.find(token); it != vocab_names.end()) row.display = it->second;
        row.count = c.first;
        row.baseline = c.second;
        row.delta = static_cast<long long>(c.first) - static_cast<long long>(c.second);
        report.rows.push_back(std::move(row));
    }
    std::stable_sort(report.rows.begin(), report.rows.end(), [](const FrequencyRow& a, const FrequencyRow& b) {
        if (a.count != b.count) return a.count > b.count;
        return a.token < b.token;
    });
    return report;
}

std::string format_frequency_report(const FrequencyReport& report, std::optional<std::size_t> top) {
    std::string out = "token_id,token,count,baseline,delta\n";
    const std::size_t n = top ? std::min(*top, report.rows.size()) : report.rows.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = report.rows[i];
        out += std::to_string(r.token) + "," + detail::csv_escape(r.display) + "," + std::to_string(r.count) + "," +
               std::to_string(r.baseline) + "," + std::to_string(r.delta) + "\n";
    }
    return out;
}

std::vector<FrequencyRow> parse_frequency_rows(std::string_view text, const std::string& source) {
    const auto lines = detail::lines_of(text);
    if (lines.empty() || lines.front().second != "token_id,token,count,baseline,delta") {
        throw FormatError(FormatErrc::bad_report, source + ": missing frequency report header");
    }
    std::vector<FrequencyRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = detail::csv_fields(lines[i].second);
        FrequencyRow r;
        if (f.size() != 5 || !detail::parse_number(std::string_view(f[0]), r.token) ||
            !detail::parse_number(std::string_view(f[2]), r.count) ||
            !detail::parse_number(std::string_view(f[3]), r.baseline) ||
            !detail::parse_number(std::string_view(f[4]), r.delta)) {
            throw FormatError(FormatErrc::bad_report, source + ":" + std::to_string(lines[i].first) + ": malformed row");
        }
        r.display = f[1];
        rows.push_back(std::move(r));
    }
    return rows;
}

void export_report(const FrequencyReport& report, const std::filesystem::path& path, std::optional<std::size_t> top) {
    write_file_text(path, format_frequency_report(report, top));
}

}  // namespace snrf
