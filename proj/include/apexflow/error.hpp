#pragma once

#include <stdexcept>
#include <string>

namespace apexflow {

enum class ErrorKind {
    Validation,  // bad input data or arguments
    Io,          // filesystem / decode failures
    Format,      // malformed binary or text file
    Divergence,  // non-finite values during optimisation
    Protocol,    // cross-validation invariant broken
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& what) : Error(ErrorKind::Format, what) {}
};

struct DivergenceError : Error {
    explicit DivergenceError(const std::string& what) : Error(ErrorKind::Divergence, what) {}
};

struct ProtocolError : Error {
    explicit ProtocolError(const std::string& what) : Error(ErrorKind::Protocol, what) {}
};

}  // namespace apexflow
