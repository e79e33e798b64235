#include "snrf/fixtures.hpp"

#include <cmath>

#include "snrf/rng.hpp"

namespace snrf {

namespace {

double init_scale(const std::string& name, std::size_t rows) {
    if (name == kEmbedName) return 1.0;
    return 1.0 / std::sqrt(static_cast<double>(rows));
}

}  // namespace

WeightMap random_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::map<std::string, Matrix> tensors;
    std::uint64_t stream = 0;
    for (const auto& [name, shape] : canonical_tensor_shapes(config)) {
        Rng rng(mix_seed(seed, stream++));
        const double scale = init_scale(name, shape.rows);
        Matrix m(shape.rows, shape.cols);
        for (float& v : m.data()) v = static_cast<float>(scale * rng.normal());
        tensors.emplace(name, std::move(m));
    }
    return WeightMap(config, std::move(tensors));
}

WeightMap perturbed_model(const WeightMap& base, double noise, std::uint64_t seed) {
    std::map<std::string, Matrix> tensors = base.tensors();
    std::uint64_t stream = 0;
    for (auto& [name, m] : tensors) {
        Rng rng(mix_seed(seed ^ 0x5eedULL, stream++));
        const double scale = noise * init_scale(name, m.rows());
        for (float& v : m.data()) v = static_cast<float>(static_cast<double>(v) + scale * rng.normal());
    }
    return WeightMap(base.config(), std::move(tensors));
}

ProbeCorpus random_corpus(std::size_t vocab, std::size_t n_contexts, std::size_t problem_len,
                          std::size_t rationale_len, std::uint64_t seed) {
    if (vocab < 4) throw ParameterError("random_corpus needs vocab >= 4");
    Rng rng(seed);
    ProbeCorpus corpus;
    for (std::size_t c = 0; c < n_contexts; ++c) {
        std::vector<TokenId> ctx;
        ctx.push_back(kInstToken);
        for (std::size_t i = 0; i < problem_len; ++i) ctx.push_back(static_cast<TokenId>(3 + rng.below(vocab - 3)));
        ctx.push_back(kSepToken);
        for (std::size_t i = 0; i < rationale_len; ++i) ctx.push_back(static_cast<TokenId>(3 + rng.below(vocab - 3)));
        corpus.contexts.push_back(std::move(ctx));
    }
    return corpus;
}

}  // namespace snrf
