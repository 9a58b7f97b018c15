// format.hpp - deterministic number formatting for CSV/JSON artifacts.

#ifndef SARA_FORMAT_HPP
#define SARA_FORMAT_HPP

#include <charconv>
#include <stdexcept>
#include <string>

namespace sara {

// Shortest decimal string that round-trips the exact double, so re-running a
// deterministic pipeline rewrites byte-identical files.
inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc()) {
        throw std::runtime_error("format_double: conversion failed");
    }
    return std::string(buf, res.ptr);
}

} // namespace sara

#endif // SARA_FORMAT_HPP
