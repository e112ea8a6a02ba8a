#pragma once

#include <stdexcept>
#include <string>

namespace gfus {

// Exit-code mapping used by the CLI: ConfigError -> 1, DataError (and
// subclasses) -> 2, InternalError -> 3.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed vocabulary or checkpoint files.
struct FormatError : DataError {
    using DataError::DataError;
};

// Broken caller contract or violated invariant.
struct InternalError : std::logic_error {
    using std::logic_error::logic_error;
};

struct ShapeError : InternalError {
    using InternalError::InternalError;
};

} // namespace gfus
