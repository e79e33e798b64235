#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace snrf {

using TokenId = std::uint32_t;

inline constexpr TokenId kEosToken = 0;
inline constexpr TokenId kInstToken = 1;
inline constexpr TokenId kSepToken = 2;

struct ModelConfig {
    std::size_t n_layers = 0;
    std::size_t d_model = 0;
    std::size_t d_inter = 0;
    std::size_t vocab = 0;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

    // Throws ParameterError unless every dimension is >= 1 and vocab >= 3.
    void validate() const;
    std::string describe() const;
};

}  // namespace snrf
