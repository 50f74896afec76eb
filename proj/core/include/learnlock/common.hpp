#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace learnlock {

/// Dimension sizes, outermost first (e.g. {N, C, H, W}).
using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class KeyFormatError : public Error {
public:
    using Error::Error;
};

class FingerprintMismatch : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

#define LL_CHECK(cond, msg)                          \
    do {                                             \
        if (!(cond)) throw ::learnlock::Error(msg);  \
    } while (0)

#define LL_CHECK_SHAPE(cond, msg)                         \
    do {                                                  \
        if (!(cond)) throw ::learnlock::ShapeError(msg);  \
    } while (0)

}  // namespace learnlock
