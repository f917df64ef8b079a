#pragma once

#include <stdexcept>
#include <string>

namespace ribreg {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SizeMismatch : Error { using Error::Error; };
struct DegenerateConfiguration : Error { using Error::Error; };
struct KTooLarge : Error { using Error::Error; };
struct EmptyCloud : Error { using Error::Error; };
struct TargetTooLarge : Error { using Error::Error; };
struct TooFewPoints : Error { using Error::Error; };
struct DegenerateInput : Error { using Error::Error; };
struct DegenerateCloud : Error { using Error::Error; };
struct AmbiguousPairing : Error { using Error::Error; };
struct CountMismatch : Error { using Error::Error; };
struct MissingRib : Error { using Error::Error; };
struct InvalidSpec : Error { using Error::Error; };
struct IllConditioned : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct EmptyFile : Error { using Error::Error; };

/// Parse failure in a text input; remembers the 1-based line it happened on.
struct ParseError : Error {
    int line;
    ParseError(const std::string& msg, int line_number)
        : Error("line " + std::to_string(line_number) + ": " + msg), line(line_number) {}
};

}  // namespace ribreg
