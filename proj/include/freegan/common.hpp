#ifndef FREEGAN_COMMON_HPP
#define FREEGAN_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace freegan {

// All numerics run in double precision; checkpoints store float32 (see checkpoint.hpp).
using real = double;

constexpr real kPi = 3.14159265358979323846;
constexpr real kTwoPi = 2.0 * kPi;

// Error taxonomy. The CLI maps FormatError to exit 3 and the rest to exit 2.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct InvalidInput : Error {
    explicit InvalidInput(const std::string& msg) : Error("InvalidInput: " + msg) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("ConfigError: " + msg) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("ShapeError: " + msg) {}
};
struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error("DomainError: " + msg) {}
};
struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error("NumericalError: " + msg) {}
};
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error("FormatError: " + msg) {}
};

}  // namespace freegan

#endif  // FREEGAN_COMMON_HPP
