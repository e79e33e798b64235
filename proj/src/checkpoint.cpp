#include "snrf/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "snrf/error.hpp"

namespace snrf {

const char* to_string(FormatErrc errc) noexcept {
    switch (errc) {
        case FormatErrc::io: return "io";
        case FormatErrc::bad_magic: return "bad-magic";
        case FormatErrc::bad_version: return "bad-version";
        case FormatErrc::bad_header: return "bad-header";
        case FormatErrc::shape_mismatch: return "shape-mismatch";
        case FormatErrc::truncated: return "truncated";
        case FormatErrc::missing_tensor: return "missing-tensor";
        case FormatErrc::unexpected_tensor: return "unexpected-tensor";
        case FormatErrc::non_finite: return "non-finite";
        case FormatErrc::bad_corpus: return "bad-corpus";
        case FormatErrc::bad_neuron_set: return "bad-neuron-set";
        case FormatErrc::bad_report: return "bad-report";
    }
    return "unknown";
}

void ModelConfig::validate() const {
    if (n_layers == 0 || d_model == 0 || d_inter == 0) throw ParameterError("model dimensions must be >= 1: " + describe());
    if (vocab < 3) throw ParameterError("vocab must be >= 3 (reserved ids 0..2): " + describe());
}

std::string ModelConfig::describe() const {
    return "n_layers=" + std::to_string(n_layers) + " d_model=" + std::to_string(d_model) +
           " d_inter=" + std::to_string(d_inter) + " vocab=" + std::to_string(vocab);
}

namespace {
std::string layer_prefix(std::size_t layer) { return "layers." + std::to_string(layer) + "."; }
}  // namespace

std::string attn_q_name(std::size_t layer) { return layer_prefix(layer) + "attn.q.weight"; }
std::string attn_k_name(std::size_t layer) { return layer_prefix(layer) + "attn.k.weight"; }
std::string attn_v_name(std::size_t layer) { return layer_prefix(layer) + "attn.v.weight"; }
std::string mlp_gate_name(std::size_t layer) { return layer_prefix(layer) + "mlp.gate.weight"; }
std::string mlp_up_name(std::size_t layer) { return layer_prefix(layer) + "mlp.up.weight"; }
std::string mlp_down_name(std::size_t layer) { return layer_prefix(layer) + "mlp.down.weight"; }

std::map<std::string, TensorShape> canonical_tensor_shapes(const ModelConfig& c) {
    std::map<std::string, TensorShape> shapes;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
        shapes[attn_q_name(l)] = {c.d_model, c.d_model};
        shapes[attn_k_name(l)] = {c.d_model, c.d_model};
        shapes[attn_v_name(l)] = {c.d_model, c.d_model};
        shapes[mlp_gate_name(l)] = {c.d_model, c.d_inter};
        shapes[mlp_up_name(l)] = {c.d_model, c.d_inter};
        shapes[mlp_down_name(l)] = {c.d_inter, c.d_model};
    }
    shapes[std::string(kEmbedName)] = {c.vocab, c.d_model};
    shapes[std::string(kUnembedName)] = {c.d_model, c.vocab};
    return shapes;
}

WeightMap::WeightMap(ModelConfig config, std::map<std::string, Matrix> tensors)
    : config_(config), tensors_(std::move(tensors)) {
    config_.validate();
    const auto shapes = canonical_tensor_shapes(config_);
    for (const auto& [name, shape] : shapes) {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw FormatError(FormatErrc::missing_tensor, name);
        if (it->second.rows() != shape.rows || it->second.cols() != shape.cols) {
            throw FormatError(FormatErrc::shape_mismatch,
                              name + " is " + std::to_string(it->second.rows()) + "x" +
                                  std::to_string(it->second.cols()) + ", expected " + std::to_string(shape.rows) +
                                  "x" + std::to_string(shape.cols));
        }
        if (!it->second.all_finite()) throw FormatError(FormatErrc::non_finite, name);
    }
    for (const auto& [name, _] : tensors_) {
        if (!shapes.contains(name)) throw FormatError(FormatErrc::unexpected_tensor, name);
    }
}

WeightMap WeightMap::zeros(const ModelConfig& config) {
    config.validate();
    std::map<std::string, Matrix> tensors;
    for (const auto& [name, shape] : canonical_tensor_shapes(config)) tensors.emplace(name, Matrix(shape.rows, shape.cols));
    return WeightMap(config, std::move(tensors));
}

const Matrix& WeightMap::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ParameterError("no tensor named " + name);
    return it->second;
}

void WeightMap::set(const std::string& name, Matrix value) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ParameterError("no tensor named " + name);
    if (value.rows() != it->second.rows() || value.cols() != it->second.cols()) {
        throw ParameterError("shape mismatch replacing " + name);
    }
    if (!value.all_finite()) throw ParameterError("non-finite value replacing " + name);
    it->second = std::move(value);
}

void require_same_config(const WeightMap& a, const WeightMap& b) {
    if (!(a.config() == b.config())) {
        throw CorrespondenceError("checkpoints lack one-to-one neuron correspondence: " + a.config().describe() +
                                  " vs " + b.config().describe());
    }
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

constexpr std::size_t kPreambleSize = 4 + 4 + 8;

std::size_t header_uint(const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key) || !obj.at(key).is_number_unsigned()) {
        throw FormatError(FormatErrc::bad_header, where + "." + key + " missing or not an unsigned integer");
    }
    return obj.at(key).get<std::size_t>();
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const WeightMap& weights) {
    const auto& c = weights.config();
    nlohmann::json header;
    header["config"] = {{"n_layers", c.n_layers}, {"d_model", c.d_model}, {"d_inter", c.d_inter}, {"vocab", c.vocab}};
    header["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, m] : weights.tensors()) {
        header["tensors"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(m.size()) * 4;
    }
    const std::string header_text = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(kPreambleSize + header_text.size() + offset);
    out.insert(out.end(), kCheckpointMagic.begin(), kCheckpointMagic.end());
    put_u32(out, kCheckpointVersion);
    put_u64(out, header_text.size());
    out.insert(out.end(), header_text.begin(), header_text.end());
    for (const auto& [name, m] : weights.tensors()) {
        for (float v : m.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

WeightMap decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& source) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic.data(), 4) != 0) {
        throw FormatError(FormatErrc::bad_magic, source + ": magic is not \"SNRF\"");
    }
    if (bytes.size() < kPreambleSize) throw FormatError(FormatErrc::truncated, source + ": preamble shorter than 16 bytes");
    const std::uint32_t version = get_u32(bytes.data() + 4);
    if (version != kCheckpointVersion) {
        throw FormatError(FormatErrc::bad_version, source + ": version " + std::to_string(version) + " (expected 1)");
    }
    const std::uint64_t header_len = get_u64(bytes.data() + 8);
    if (header_len > bytes.size() - kPreambleSize) {
        throw FormatError(FormatErrc::truncated, source + ": header_length " + std::to_string(header_len) +
                                                     " exceeds file size");
    }
    const auto* header_begin = reinterpret_cast<const char*>(bytes.data() + kPreambleSize);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_begin, header_begin + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatErrc::bad_header, source + ": header is not valid JSON (" + e.what() + ")");
    }
    if (!header.is_object() || !header.contains("config") || !header.contains("tensors") ||
        !header.at("tensors").is_array()) {
        throw FormatError(FormatErrc::bad_header, source + ": header needs config and tensors[]");
    }
    const auto& jc = header.at("config");
    ModelConfig config;
    config.n_layers = header_uint(jc, "n_layers", "config");
    config.d_model = header_uint(jc, "d_model", "config");
    config.d_inter = header_uint(jc, "d_inter", "config");
    config.vocab = header_uint(jc, "vocab", "config");
    try {
        config.validate();
    } catch (const ParameterError& e) {
        throw FormatError(FormatErrc::bad_header, source + ": " + e.what());
    }

    const auto shapes = canonical_tensor_shapes(config);
    const std::size_t payload_start = kPreambleSize + header_len;
    const std::size_t payload_size = bytes.size() - payload_start;
    std::map<std::string, Matrix> tensors;
    std::uint64_t payload_used = 0;
    for (const auto& jt : header.at("tensors")) {
        if (!jt.is_object() || !jt.contains("name") || !jt.at("name").is_string()) {
            throw FormatError(FormatErrc::bad_header, source + ": tensor entry without a name");
        }
        const std::string name = jt.at("name").get<std::string>();
        const std::size_t rows = header_uint(jt, "rows", name);
        const std::size_t cols = header_uint(jt, "cols", name);
        const std::uint64_t offset = header_uint(jt, "offset", name);
        auto shape_it = shapes.find(name);
        if (shape_it == shapes.end()) throw FormatError(FormatErrc::unexpected_tensor, source + ": " + name);
        if (tensors.contains(name)) throw FormatError(FormatErrc::bad_header, source + ": duplicate tensor " + name);
        if (shape_it->second.rows != rows || shape_it->second.cols != cols) {
            throw FormatError(FormatErrc::shape_mismatch,
                              source + ": " + name + " header shape " + std::to_string(rows) + "x" +
                                  std::to_string(cols) + ", config requires " +
                                  std::to_string(shape_it->second.rows) + "x" +
                                  std::to_string(shape_it->second.cols));
        }
        const std::uint64_t nbytes = static_cast<std::uint64_t>(rows) * cols * 4;
        if (offset > payload_size || nbytes > payload_size - offset) {
            throw FormatError(FormatErrc::truncated, source + ": " + name + " needs " + std::to_string(nbytes) +
                                                         " bytes at offset " + std::to_string(offset) +
                                                         " but payload holds " + std::to_string(payload_size));
        }
        std::vector<float> data(rows * cols);
        const std::uint8_t* p = bytes.data() + payload_start + offset;
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] = std::bit_cast<float>(get_u32(p + 4 * i));
            if (!std::isfinite(data[i])) {
                throw FormatError(FormatErrc::non_finite, source + ": " + name + " entry " + std::to_string(i));
            }
        }
        tensors.emplace(name, Matrix(rows, cols, std::move(data)));
        payload_used += nbytes;
    }
    for (const auto& [name, _] : shapes) {
        if (!tensors.contains(name)) throw FormatError(FormatErrc::missing_tensor, source + ": " + name);
    }
    if (payload_used != payload_size) {
        throw FormatError(FormatErrc::bad_header, source + ": payload is " + std::to_string(payload_size) +
                                                      " bytes but tensors cover " + std::to_string(payload_used));
    }
    return WeightMap(config, std::move(tensors));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatErrc::io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw FormatError(FormatErrc::io, "read failed for " + path.string());
    return bytes;
}

std::string read_file_text(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrc::io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatErrc::io, "write failed for " + path.string());
}

void write_file_text(const std::filesystem::path& path, std::string_view text) {
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

WeightMap load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file_bytes(path), path.string());
}

void save_checkpoint(const WeightMap& weights, const std::filesystem::path& path) {
    write_file_bytes(path, encode_checkpoint(weights));
}

ProbeCorpus parse_corpus(std::string_view text, std::size_t vocab, const std::string& source) {
    ProbeCorpus corpus;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        const std::string where = source + ":" + std::to_string(line_no);

        std::vector<TokenId> context;
        std::size_t i = 0;
        std::size_t position = 0;
        while (i < line.size()) {
            if (line[i] == ' ') {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j < line.size() && line[j] != ' ') ++j;
            const std::string_view tok = line.substr(i, j - i);
            TokenId id = 0;
            auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), id);
            if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
                throw FormatError(FormatErrc::bad_corpus,
                                  where + ": position " + std::to_string(position) + ": not a token id '" +
                                      std::string(tok) + "'");
            }
            if (id >= vocab) {
                throw FormatError(FormatErrc::bad_corpus, where + ": position " + std::to_string(position) +
                                                              ": token id " + std::to_string(id) +
                                                              " >= vocab " + std::to_string(vocab));
            }
            context.push_back(id);
            ++position;
            i = j;
        }
        if (context.empty()) throw FormatError(FormatErrc::bad_corpus, where + ": empty context");
        corpus.contexts.push_back(std::move(context));
    }
    if (corpus.contexts.empty()) throw FormatError(FormatErrc::bad_corpus, source + ": no contexts");
    return corpus;
}

ProbeCorpus load_corpus(const std::filesystem::path& path, std::size_t vocab) {
    return parse_corpus(read_file_text(path), vocab, path.string());
}

std::map<TokenId, std::string> load_vocab_names(const std::filesystem::path& path) {
    const std::string text = read_file_text(path);
    std::map<TokenId, std::string> names;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string_view line(text.data() + pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        TokenId id = 0;
        auto [ptr, ec] = std::from_chars(line.data(), line.data() + (tab == std::string_view::npos ? 0 : tab), id);
        if (tab == std::string_view::npos || ec != std::errc{} || ptr != line.data() + tab) {
            throw FormatError(FormatErrc::bad_corpus, path.string() + ":" + std::to_string(line_no) +
                                                          ": expected id<TAB>string");
        }
        names[id] = std::string(line.substr(tab + 1));
    }
    return names;
}

std::string format_corpus(const ProbeCorpus& corpus) {
    std::string out;
    for (const auto& ctx : corpus.contexts) {
        for (std::size_t i = 0; i < ctx.size(); ++i) {
            if (i) out += ' ';
            out += std::to_string(ctx[i]);
        }
        out += '\n';
    }
    return out;
}

}  // namespace snrf
