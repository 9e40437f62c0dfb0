#pragma once

// Shared error types and small text helpers used by every footlab module.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace footlab {

/// Malformed input document or byte stream.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A specific data row of a delimited file could not be parsed.
class RowError : public FormatError {
public:
    RowError(std::size_t row, const std::string& what)
        : FormatError("row " + std::to_string(row) + ": " + what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

/// Caller passed arguments outside an operation's domain.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Precondition of a numeric primitive violated (programming error upstream).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Domain validation failure naming every offending field at once.
class ValidationError : public ArgumentError {
public:
    struct Field {
        std::string name;
        std::string message;
    };

    explicit ValidationError(std::vector<Field> fields) : ArgumentError(render(fields)), fields_(std::move(fields)) {}
    ValidationError(std::string name, std::string message)
        : ValidationError(std::vector<Field>{{std::move(name), std::move(message)}}) {}
    const std::vector<Field>& fields() const noexcept { return fields_; }

private:
    static std::string render(const std::vector<Field>& fields) {
        std::string s;
        for (const auto& f : fields) s += (s.empty() ? "" : "; ") + f.name + ": " + f.message;
        return s;
    }
    std::vector<Field> fields_;
};

class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConflictError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace text {

inline std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(std::string_view s, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(delim, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            return out;
        }
        out.emplace_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

/// Splits into lines, dropping a trailing '\r' on each and a final empty line.
inline std::vector<std::string_view> lines(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start < s.size()) {
        auto pos = s.find('\n', start);
        if (pos == std::string_view::npos) pos = s.size();
        auto line = s.substr(start, pos - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.push_back(line);
        start = pos + 1;
    }
    return out;
}

/// Comma or semicolon, whichever occurs more often in the header line.
inline char detect_delimiter(std::string_view header) {
    std::size_t commas = 0, semis = 0;
    for (char c : header) {
        if (c == ',') ++commas;
        if (c == ';') ++semis;
    }
    return semis > commas ? ';' : ',';
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        if (s == "inf" || s == "Inf") return std::numeric_limits<double>::infinity();
        return std::nullopt;
    }
    return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

/// Shortest representation that round-trips; +inf renders as "inf".
inline std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

/// Splits one delimited line; fields may be wrapped in double quotes, with
/// "" standing for a literal quote inside a quoted field.
inline std::vector<std::string> split_quoted(std::string_view s, char delim) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false, was_quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < s.size() && s[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"' && !was_quoted && trim(cur).empty()) {
            cur.clear();
            quoted = was_quoted = true;
        } else if (c == delim) {
            out.push_back(std::move(cur));
            cur.clear();
            was_quoted = false;
        } else {
            cur += c;
        }
    }
    if (quoted) throw FormatError("unterminated quoted field");
    out.push_back(std::move(cur));
    return out;
}

/// Quotes a field when it holds the delimiter, a quote, or a line break.
inline std::string quote_field(std::string_view s, char delim) {
    if (s.find_first_of(std::string{delim, '"', '\n', '\r'}) == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

/// "Natural" ordering so that A2 < A10.
inline bool natural_less(std::string_view a, std::string_view b) {
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const bool da = a[i] >= '0' && a[i] <= '9';
        const bool db = b[j] >= '0' && b[j] <= '9';
        if (da && db) {
            std::size_t ie = i, je = j;
            while (ie < a.size() && a[ie] >= '0' && a[ie] <= '9') ++ie;
            while (je < b.size() && b[je] >= '0' && b[je] <= '9') ++je;
            auto na = a.substr(i, ie - i), nb = b.substr(j, je - j);
            while (na.size() > 1 && na.front() == '0') na.remove_prefix(1);
            while (nb.size() > 1 && nb.front() == '0') nb.remove_prefix(1);
            if (na.size() != nb.size()) return na.size() < nb.size();
            if (na != nb) return na < nb;
            i = ie;
            j = je;
        } else {
            if (a[i] != b[j]) return a[i] < b[j];
            ++i;
            ++j;
        }
    }
    if ((a.size() - i) != (b.size() - j)) return (a.size() - i) < (b.size() - j);
    return a < b;
}

}  // namespace text

/// splitmix64 finalizer; used to derive independent seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Bounded draw in [0, n) from a 64-bit engine (Lemire's method).
template <class Engine>
std::uint64_t uniform_below(Engine& eng, std::uint64_t n) {
    if (n <= 1) return 0;
    for (;;) {
        const std::uint64_t x = eng();
        const unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
        const auto low = static_cast<std::uint64_t>(m);
        if (low >= n || low >= (-n) % n) return static_cast<std::uint64_t>(m >> 64);
    }
}

/// Uniform real in [0, 1) with 53 bits of precision.
template <class Engine>
double uniform_unit(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

}  // namespace footlab
