#pragma once

#include <stdexcept>
#include <string>

namespace pyramid {

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ZeroNormError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct InvalidEntryError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct EmptyIndexError : std::logic_error {
    using std::logic_error::logic_error;
};
struct DuplicateIdError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct EmptyInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct SampleTooLargeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct TooFewPointsError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct BalanceInfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    FormatError(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::size_t byte_offset;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConnectivityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NetTimeout : ConnectivityError {
    using ConnectivityError::ConnectivityError;
};
struct ShardUnavailableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LeaseHeldError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotFoundError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace pyramid
