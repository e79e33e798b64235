#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace snrf {

inline constexpr const char* kToolVersion = "0.1.0";

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Everything needed to reproduce one CLI invocation. Output locations are
/// deliberately excluded so equal manifests imply equal output bytes.
struct RunManifest {
    std::string subcommand;
    nlohmann::json parameters = nlohmann::json::object();
    std::map<std::string, std::pair<std::string, std::string>> inputs;  // role -> (path, sha256)
    std::vector<std::uint64_t> seeds;

    void add_input(const std::string& role, const std::filesystem::path& path);
    std::string to_json() const;
};

/// Stages a directory next to its destination and renames it into place on
/// commit(); without commit the staging tree is removed.
class StagedDir {
public:
    explicit StagedDir(std::filesystem::path destination);
    ~StagedDir();
    StagedDir(const StagedDir&) = delete;
    StagedDir& operator=(const StagedDir&) = delete;

    const std::filesystem::path& path() const noexcept { return staging_; }
    void commit();

private:
    std::filesystem::path destination_;
    std::filesystem::path staging_;
    bool committed_ = false;
};

/// Same for a set of files written together (a main output plus sidecars).
class StagedFiles {
public:
    StagedFiles() = default;
    ~StagedFiles();
    StagedFiles(const StagedFiles&) = delete;
    StagedFiles& operator=(const StagedFiles&) = delete;

    // Returns the temporary path to write `destination` to.
    std::filesystem::path stage(const std::filesystem::path& destination);
    void commit();

private:
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> files_;  // (staging, destination)
    bool committed_ = false;
};

/// Entry point of the `snrf` tool. Returns the process exit code: 0 success,
/// 2 parameter error, 3 input-format error, 4 numerical failure. Failures print
/// one line "snrf: error: <category>: <message>" to stderr.
int run_cli(int argc, const char* const* argv);

}  // namespace snrf
