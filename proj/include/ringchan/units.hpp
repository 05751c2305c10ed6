#pragma once

// Quantity parsing for the CLI boundary: bare numbers are SI base units,
// optional suffixes scale to SI (e.g. "0.39mm", "50um", "40ms").

#include <charconv>
#include <stdexcept>
#include <string>

namespace ringchan {

inline double parse_quantity(const std::string& text) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = text.data() + text.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{})
        throw std::invalid_argument("cannot parse quantity: '" + text + "'");
    std::string suffix(res.ptr, end);
    if (suffix.empty() || suffix == "m" || suffix == "s") return value;
    if (suffix == "cm") return value * 1e-2;
    if (suffix == "mm" || suffix == "ms") return value * 1e-3;
    if (suffix == "um" || suffix == "us") return value * 1e-6;
    if (suffix == "nm") return value * 1e-9;
    if (suffix == "min") return value * 60.0;
    if (suffix == "h") return value * 3600.0;
    throw std::invalid_argument("unknown unit suffix '" + suffix + "' in '" + text + "'");
}

}  // namespace ringchan
