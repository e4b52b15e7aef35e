#pragma once

// Minimal CSV emission: locale-independent numbers, RFC 4180 quoting.

#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace carflow::csv {

/// Shortest representation that parses back to the same double.
inline std::string number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    if (res.ec != std::errc()) return "nan";
    return std::string(buf, res.ptr);
}

inline std::string number(std::uint64_t v) { return std::to_string(v); }

inline std::string number(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

inline bool needs_quotes(std::string_view s) {
    return s.find_first_of(",\"\r\n") != std::string_view::npos || (!s.empty() && (s.front() == ' ' || s.back() == ' '));
}

inline std::string field(std::string_view s) {
    if (!needs_quotes(s)) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

/// Accumulates a document in memory so the bytes can be hashed before writing.
class Document {
public:
    explicit Document(const std::vector<std::string>& header) { row(header); }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += field(cells[i]);
        }
        text_ += "\r\n";
        ++rows_;
    }

    const std::string& text() const { return text_; }
    std::size_t rows() const { return rows_; } ///< including the header

private:
    std::string text_;
    std::size_t rows_ = 0;
};

} // namespace carflow::csv
