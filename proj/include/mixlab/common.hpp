#ifndef MIXLAB_COMMON_HPP
#define MIXLAB_COMMON_HPP

#include <stdexcept>
#include <string>

namespace mixlab {

// Error taxonomy mirrors the CLI exit-code contract:
//   UsageError -> 1, DataError -> 2, NumericError -> 3.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace mixlab

#endif
