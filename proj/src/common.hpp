#pragma once

#include <stdexcept>
#include <string>

namespace flowtune {

// Bad argument / contract violation detected at a module boundary.
class ValueError : public std::invalid_argument {
public:
    explicit ValueError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Filesystem-level failure (missing file, unwritable path, ...).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline const char* version() { return "0.1.0"; }

}  // namespace flowtune
