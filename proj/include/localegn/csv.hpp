#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "localegn/errors.hpp"

namespace localegn {
namespace csv {

/// Split one CSV line on commas. No quoting: none of the formats here need it.
inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

/// Parse a double, reporting the 1-based row/column on failure.
inline double parse_double(const std::string& cell, std::size_t row, std::size_t col,
                           const std::string& file) {
    const std::string t = trim(cell);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size())
        throw DataError(file + ": cannot parse '" + cell + "' as a number at row " +
                        std::to_string(row) + ", column " + std::to_string(col));
    return v;
}

inline long parse_index(const std::string& cell, std::size_t row, std::size_t col,
                        const std::string& file) {
    const std::string t = trim(cell);
    long v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size())
        throw DataError(file + ": cannot parse '" + cell + "' as an integer at row " +
                        std::to_string(row) + ", column " + std::to_string(col));
    return v;
}

/// Read all lines, dropping a trailing empty line.
inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    return lines;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out << content;
    if (!out) throw DataError("write failed: " + path);
}

/// Shortest decimal form that round-trips a double.
inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace csv
} // namespace localegn
