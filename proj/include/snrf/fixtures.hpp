#pragma once

#include <cstdint>

#include "snrf/checkpoint.hpp"

namespace snrf {

// Gaussian weights scaled by 1/sqrt(fan_in); embeddings have unit variance.
WeightMap random_model(const ModelConfig& config, std::uint64_t seed);

// base + noise * N(0, 1) * (per-tensor init scale), entrywise.
WeightMap perturbed_model(const WeightMap& base, double noise, std::uint64_t seed);

/// `n_contexts` contexts shaped [INST] problem... [SEP] rationale..., with
/// ordinary token ids drawn uniformly from [3, vocab).
ProbeCorpus random_corpus(std::size_t vocab, std::size_t n_contexts, std::size_t problem_len,
                          std::size_t rationale_len, std::uint64_t seed);

}  // namespace snrf
