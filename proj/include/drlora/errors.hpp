#pragma once

#include <stdexcept>
#include <string>

namespace drlora {

// Error taxonomy shared by every module. CLI maps ConfigError to exit 2,
// everything else to exit 3.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error("shape error: " + what) {}
};

struct BudgetError : Error {
    explicit BudgetError(const std::string& what) : Error("budget error: " + what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error("io error: " + what) {}
};

struct StateError : Error {
    explicit StateError(const std::string& what) : Error("state error: " + what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error("numeric error: " + what) {}
};

struct InputError : Error {
    explicit InputError(const std::string& what) : Error("input error: " + what) {}
};

}  // namespace drlora
