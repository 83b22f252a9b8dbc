#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace mzi {

inline constexpr const char* kVersion = "0.1.0";

/// Raised when a configuration routes no light to the detectors involved in a
/// measurement (for example a fully blocked arm feeding the only open port),
/// so the requested quantity is undefined.
class degenerate_input_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}

inline void require_finite(double x, const std::string& name) {
    require(std::isfinite(x), name + " must be finite");
}

inline void require_unit_interval(double x, const std::string& name) {
    require_finite(x, name);
    require(x >= 0.0 && x <= 1.0, name + " must lie in [0, 1]");
}

inline double clamp01(double x) {
    if (x < 0.0) return 0.0;
    if (x > 1.0) return 1.0;
    return x;
}

}  // namespace detail

}  // namespace mzi
