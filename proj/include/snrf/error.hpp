#pragma once

#include <stdexcept>
#include <string>

namespace snrf {

// Exit codes used by the command-line front end.
enum class ErrorCategory {
    parameter = 2,
    input_format = 3,
    numerical = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }
    int exit_code() const noexcept { return static_cast<int>(category_); }
    virtual const char* category_name() const noexcept = 0;

private:
    ErrorCategory category_;
};

class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& what) : Error(ErrorCategory::parameter, what) {}
    const char* category_name() const noexcept override { return "parameter"; }
};

// Checkpoint / corpus / neuron-set parsing failures.
enum class FormatErrc {
    io,
    bad_magic,
    bad_version,
    bad_header,
    shape_mismatch,
    truncated,
    missing_tensor,
    unexpected_tensor,
    non_finite,
    bad_corpus,
    bad_neuron_set,
    bad_report,
};

const char* to_string(FormatErrc errc) noexcept;

class FormatError : public Error {
public:
    FormatError(FormatErrc errc, const std::string& what)
        : Error(ErrorCategory::input_format, std::string(to_string(errc)) + ": " + what), errc_(errc) {}

    FormatErrc errc() const noexcept { return errc_; }
    const char* category_name() const noexcept override { return "input-format"; }

private:
    FormatErrc errc_;
};

// Two checkpoints without one-to-one neuron correspondence (differing configs).
class CorrespondenceError : public Error {
public:
    explicit CorrespondenceError(const std::string& what) : Error(ErrorCategory::input_format, what) {}
    const char* category_name() const noexcept override { return "correspondence"; }
};

class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorCategory::numerical, what) {}
    const char* category_name() const noexcept override { return "numerical"; }
};

}  // namespace snrf
