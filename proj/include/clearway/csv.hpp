#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "clearway/errors.hpp"

namespace clearway {

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
    int require_column(const std::string& name) const {
        const int c = column(name);
        if (c < 0) throw MissingColumn(name);
        return c;
    }
};

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(field);
    return out;
}
}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw EmptyFile(path);
    t.header = detail::split_csv_line(line);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        t.rows.push_back(detail::split_csv_line(line));
    }
    return t;
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += "\"\"";
        else q += c;
    }
    q += '"';
    return q;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        if (!out_) throw IoFailure("cannot write " + path);
    }
    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << csv_quote(fields[i]);
        }
        out_ << '\n';
    }
    void close() { out_.close(); }

private:
    std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Numbers
// ---------------------------------------------------------------------------

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_int(const std::string& s) {
    if (s.empty()) return std::nullopt;
    long long v = 0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end) return std::nullopt;
    return v;
}

// ---------------------------------------------------------------------------
// Timestamps (minute resolution, stored as minutes since the Unix epoch)
// ---------------------------------------------------------------------------

using MinuteTime = std::int64_t;

namespace detail {
inline std::int64_t days_from_civil(int y, int m, int d) {
    // Howard Hinnant's civil-days algorithm.
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}
inline void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yy + (m <= 2));
}
}  // namespace detail

// Accepts "YYYY-MM-DD HH:MM", "YYYY-MM-DDTHH:MM", optionally with ":SS" (seconds dropped).
inline std::optional<MinuteTime> parse_minute_time(const std::string& s) {
    int y, mo, d, h, mi;
    char sep;
    if (std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d", &y, &mo, &d, &sep, &h, &mi) != 6) return std::nullopt;
    if (sep != ' ' && sep != 'T') return std::nullopt;
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59) return std::nullopt;
    return detail::days_from_civil(y, mo, d) * 1440 + h * 60 + mi;
}

inline std::string format_minute_time(MinuteTime t) {
    std::int64_t days = t / 1440;
    std::int64_t rem = t % 1440;
    if (rem < 0) {
        rem += 1440;
        --days;
    }
    int y, m, d;
    detail::civil_from_days(days, y, m, d);
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02lld:%02lld", y, m, d,
                  static_cast<long long>(rem / 60), static_cast<long long>(rem % 60));
    return buf;
}

// Start of the 15-minute bin containing t (floor division, negative-safe).
inline MinuteTime bin_of(MinuteTime t) {
    MinuteTime q = t / 15;
    if (t % 15 != 0 && t < 0) --q;
    return q * 15;
}

inline int hour_of_day(MinuteTime t) {
    std::int64_t rem = t % 1440;
    if (rem < 0) rem += 1440;
    return static_cast<int>(rem / 60);
}

// ISO weekday, 1 = Monday .. 7 = Sunday.
inline int day_of_week(MinuteTime t) {
    std::int64_t days = t / 1440;
    if (t % 1440 < 0) --days;
    const int wd = static_cast<int>(((days % 7) + 10) % 7);  // epoch day 0 = Thursday
    return wd + 1;
}

inline int month_of_year(MinuteTime t) {
    std::int64_t days = t / 1440;
    if (t % 1440 < 0) --days;
    int y, m, d;
    detail::civil_from_days(days, y, m, d);
    return m;
}

}  // namespace clearway
