#pragma once

#include <stdexcept>
#include <string>

namespace hvseg {

enum class ErrorCode {
    invalid_argument,
    not_found,
    conflict,
    unsupported,
    io,
    predictor,
};

// Single exception type for the library; the code drives HTTP status
// mapping in the service and exit codes in the CLI.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool condition, const std::string& message,
                    ErrorCode code = ErrorCode::invalid_argument) {
    if (!condition) throw Error(code, message);
}

}  // namespace hvseg
