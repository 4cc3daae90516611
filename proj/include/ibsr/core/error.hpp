#pragma once

#include <stdexcept>
#include <string>

namespace ibsr {

/// Error categories drive the CLI exit message prefix; they mirror the
/// failure classes the library promises (I/O vs schema vs referential vs
/// numeric vs usage).
enum class ErrorKind {
    Io,
    Validation,
    Referential,
    Numeric,
    Usage,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

    const char* kind_name() const {
        switch (kind_) {
            case ErrorKind::Io: return "io";
            case ErrorKind::Validation: return "validation";
            case ErrorKind::Referential: return "referential";
            case ErrorKind::Numeric: return "numeric";
            case ErrorKind::Usage: return "usage";
        }
        return "unknown";
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace ibsr
