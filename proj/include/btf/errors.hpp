#pragma once

#include <stdexcept>
#include <string>

namespace btf {

// Error taxonomy. The CLI maps ConfigError -> exit 1, DataError -> exit 2,
// and NumericError (plus anything else) -> exit 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between tensors (always a bug in the caller).
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operation applied outside its domain (e.g. pooling an empty set).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace btf
