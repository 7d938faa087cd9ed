#pragma once

#include <stdexcept>
#include <string>

namespace qfuse {

// Exception hierarchy. Every library failure derives from qfuse::Error so
// callers can catch one type; the CLI maps the concrete kind to an exit code.
enum class ErrorKind {
    domain,
    invalid_input,
    config,
    data,
    divergence,
    selection,
    inference,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct DomainError : Error {
    explicit DomainError(const std::string& w) : Error(ErrorKind::domain, w) {}
};
struct InvalidInput : Error {
    explicit InvalidInput(const std::string& w) : Error(ErrorKind::invalid_input, w) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorKind::config, w) {}
};
struct DataError : Error {
    explicit DataError(const std::string& w) : Error(ErrorKind::data, w) {}
};
struct DivergenceError : Error {
    explicit DivergenceError(const std::string& w) : Error(ErrorKind::divergence, w) {}
};
struct SelectionError : Error {
    explicit SelectionError(const std::string& w) : Error(ErrorKind::selection, w) {}
};
struct InferenceError : Error {
    explicit InferenceError(const std::string& w) : Error(ErrorKind::inference, w) {}
};

}  // namespace qfuse
