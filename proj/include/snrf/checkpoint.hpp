#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "snrf/matrix.hpp"
#include "snrf/model_config.hpp"

namespace snrf {

inline constexpr std::string_view kCheckpointMagic = "SNRF";
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Canonical tensor names.
std::string attn_q_name(std::size_t layer);
std::string attn_k_name(std::size_t layer);
std::string attn_v_name(std::size_t layer);
std::string mlp_gate_name(std::size_t layer);
std::string mlp_up_name(std::size_t layer);
std::string mlp_down_name(std::size_t layer);
inline constexpr std::string_view kEmbedName = "embed.weight";
inline constexpr std::string_view kUnembedName = "unembed.weight";

struct TensorShape {
    std::size_t rows = 0;
    std::size_t cols = 0;
    friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

// Name -> shape for every tensor a config requires.
std::map<std::string, TensorShape> canonical_tensor_shapes(const ModelConfig& config);

/// All weights of one checkpoint. Construction enforces the canonical
/// tensor set and shapes.
class WeightMap {
public:
    WeightMap(ModelConfig config, std::map<std::string, Matrix> tensors);

    // All-zero weights for `config`.
    static WeightMap zeros(const ModelConfig& config);

    const ModelConfig& config() const noexcept { return config_; }
    const std::map<std::string, Matrix>& tensors() const noexcept { return tensors_; }
    const Matrix& at(const std::string& name) const;

    // Replaces one tensor; shape and finiteness are re-checked.
    void set(const std::string& name, Matrix value);

    friend bool operator==(const WeightMap&, const WeightMap&) = default;

private:
    ModelConfig config_;
    std::map<std::string, Matrix> tensors_;
};

// Throws CorrespondenceError when the two configs differ.
void require_same_config(const WeightMap& a, const WeightMap& b);

std::vector<std::uint8_t> encode_checkpoint(const WeightMap& weights);
WeightMap decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>");

WeightMap load_checkpoint(const std::filesystem::path& path);
void save_checkpoint(const WeightMap& weights, const std::filesystem::path& path);

struct ProbeCorpus {
    std::vector<std::vector<TokenId>> contexts;
    std::map<TokenId, std::string> vocab_names;
};

// One context per line of space-separated token ids; every id must be < vocab.
ProbeCorpus parse_corpus(std::string_view text, std::size_t vocab, const std::string& source = "<memory>");
ProbeCorpus load_corpus(const std::filesystem::path& path, std::size_t vocab);

// Sidecar lines "id<TAB>string".
std::map<TokenId, std::string> load_vocab_names(const std::filesystem::path& path);

std::string format_corpus(const ProbeCorpus& corpus);

// Whole-file helpers shared by the loaders.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_file_text(const std::filesystem::path& path, std::string_view text);

}  // namespace snrf
