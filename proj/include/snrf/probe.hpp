#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "snrf/checkpoint.hpp"
#include "snrf/neuron.hpp"

namespace snrf {

// Corpus contexts cut after the first SEP token (SEP kept), so the model
// writes its own continuation. Contexts without SEP are used whole.
std::vector<std::vector<TokenId>> probe_prompts(const ProbeCorpus& corpus);

/// Greedy continuations (prompt excluded) with `neuron`'s activation scaled
/// by `lambda` at every step. lambda == 1 reproduces the plain decode.
std::vector<std::vector<TokenId>> amplified_generate(const WeightMap& weights,
                                                     const std::vector<std::vector<TokenId>>& prompts,
                                                     const NeuronId& neuron, double lambda, std::size_t max_new);

struct FrequencyRow {
    TokenId token = 0;
    std::string display;
    std::size_t count = 0;     // under amplification
    std::size_t baseline = 0;  // lambda = 1
    long long delta = 0;

    friend bool operator==(const FrequencyRow&, const FrequencyRow&) = default;
};

struct FrequencyReport {
    NeuronId neuron;
    double lambda = 1.0;
    std::vector<FrequencyRow> rows;  // count desc, then token id asc

    std::size_t total_count() const;
};

/// Token histogram of generated continuations against a baseline run. Every
/// token seen in either run gets a row.
FrequencyReport token_frequency(const std::vector<std::vector<TokenId>>& generations,
                                const std::vector<std::vector<TokenId>>& baseline,
                                const std::map<TokenId, std::string>& vocab_names = {});

// CSV "token_id,token,count,baseline,delta". `top` keeps only the first rows.
std::string format_frequency_report(const FrequencyReport& report, std::optional<std::size_t> top = std::nullopt);
std::vector<FrequencyRow> parse_frequency_rows(std::string_view text, const std::string& source = "<memory>");
void export_report(const FrequencyReport& report, const std::filesystem::path& path,
                   std::optional<std::size_t> top = std::nullopt);

}  // namespace snrf
