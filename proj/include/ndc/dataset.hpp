#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ndc/errors.hpp"

namespace ndc {

/// Uniformly sampled current/voltage record. Sample k sits at t = k * dt and
/// current[k] is held over [t_k, t_k + dt). Positive current charges.
struct Dataset {
    double dt = 1.0;
    double soc0 = 1.0;
    std::vector<double> current;
    std::vector<double> voltage;
    std::map<std::string, std::string> meta;

    std::size_t size() const noexcept { return current.size(); }
    double time(std::size_t k) const noexcept { return static_cast<double>(k) * dt; }

    void validate() const {
        detail::require(std::isfinite(dt) && dt > 0.0, "Dataset: dt must be > 0");
        detail::require(soc0 >= 0.0 && soc0 <= 1.0, "Dataset: soc0 must lie in [0, 1]");
        detail::require(current.size() == voltage.size(), "Dataset: current and voltage lengths differ");
        detail::require(current.size() >= 2, "Dataset: at least two samples are required");
    }
};

struct NamedSeries {
    std::string name;
    std::vector<double> values;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

inline bool parse_double(std::string_view s, double& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

/// Writes `content` next to `path` and renames it into place.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot open " + tmp.string() + " for writing");
        os << content;
        if (!os.flush()) throw Error("failed writing " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace detail

inline std::string format_dataset(const Dataset& data) {
    data.validate();
    std::ostringstream os;
    os << "# dt=" << detail::format_double(data.dt) << '\n';
    os << "# soc0=" << detail::format_double(data.soc0) << '\n';
    for (const auto& [key, value] : data.meta) {
        detail::require(!key.empty() && key.find_first_of("=\n\r") == std::string::npos,
                        "Dataset: invalid meta key '" + key + "'");
        detail::require(value.find_first_of("\n\r") == std::string::npos,
                        "Dataset: meta value for '" + key + "' contains a newline");
        os << "# " << key << '=' << value << '\n';
    }
    os << "t,current_a,voltage_v\n";
    for (std::size_t k = 0; k < data.size(); ++k)
        os << detail::format_double(data.time(k)) << ',' << detail::format_double(data.current[k]) << ','
           << detail::format_double(data.voltage[k]) << '\n';
    return os.str();
}

inline void write_dataset(const std::filesystem::path& path, const Dataset& data) {
    detail::write_atomically(path, format_dataset(data));
}

inline Dataset parse_dataset(std::string_view text) {
    if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);

    Dataset data;
    bool have_dt = false;
    bool have_soc0 = false;
    bool have_columns = false;
    std::size_t line_no = 0;

    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;

        if (line.front() == '#') {
            if (have_columns) throw ParseError("header line after the column header", line_no);
            line.remove_prefix(1);
            while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
            const auto eq = line.find('=');
            if (eq == std::string_view::npos || eq == 0) throw ParseError("header line is not key=value", line_no);
            const std::string key(line.substr(0, eq));
            const std::string_view value = line.substr(eq + 1);
            if (key == "dt" || key == "soc0") {
                double v = 0.0;
                if (!detail::parse_double(value, v)) throw ParseError("invalid number for '" + key + "'", line_no);
                if (key == "dt") {
                    if (!(v > 0.0) || !std::isfinite(v)) throw ParseError("dt must be a positive number", line_no);
                    data.dt = v;
                    have_dt = true;
                } else {
                    if (!(v >= 0.0 && v <= 1.0)) throw ParseError("soc0 must lie in [0, 1]", line_no);
                    data.soc0 = v;
                    have_soc0 = true;
                }
            } else {
                data.meta[key] = std::string(value);
            }
            continue;
        }

        if (!have_columns) {
            if (!have_dt) throw ParseError("missing required header key 'dt'", line_no);
            if (!have_soc0) throw ParseError("missing required header key 'soc0'", line_no);
            if (line != "t,current_a,voltage_v")
                throw ParseError("expected column header 't,current_a,voltage_v'", line_no);
            have_columns = true;
            continue;
        }

        double fields[3];
        std::size_t count = 0;
        std::string_view rest = line;
        while (true) {
            const auto comma = rest.find(',');
            const auto cell = rest.substr(0, comma);
            if (count == 3) throw ParseError("ragged row: more than 3 fields", line_no);
            if (!detail::parse_double(cell, fields[count]))
                throw ParseError("invalid number '" + std::string(cell) + "'", line_no);
            ++count;
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        if (count != 3) throw ParseError("ragged row: expected 3 fields", line_no);

        const double expected_t = static_cast<double>(data.current.size()) * data.dt;
        if (std::abs(fields[0] - expected_t) > 1e-9 * std::max(1.0, std::abs(expected_t)))
            throw ParseError("time " + detail::format_double(fields[0]) + " does not match k*dt = " +
                                 detail::format_double(expected_t) + " (non-monotone or irregular sampling)",
                             line_no);
        data.current.push_back(fields[1]);
        data.voltage.push_back(fields[2]);
    }

    if (!have_dt) throw ParseError("missing required header key 'dt'", 0);
    if (!have_soc0) throw ParseError("missing required header key 'soc0'", 0);
    if (!have_columns) throw ParseError("missing column header 't,current_a,voltage_v'", 0);
    if (data.size() < 2) throw ParseError("dataset needs at least two samples", 0);
    return data;
}

inline Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path.string());
    std::ostringstream buf;
    buf << is.rdbuf();
    try {
        return parse_dataset(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
}

/// CSV with a `t` column followed by one column per named series.
inline void export_series(const std::filesystem::path& path, const std::vector<double>& t,
                          const std::vector<NamedSeries>& series) {
    for (const auto& s : series) {
        detail::require(s.values.size() == t.size(), "export_series: series '" + s.name + "' has wrong length");
        detail::require(s.name.find_first_of(",\n\r") == std::string::npos,
                        "export_series: invalid series name '" + s.name + "'");
    }
    std::ostringstream os;
    os << 't';
    for (const auto& s : series) os << ',' << s.name;
    os << '\n';
    for (std::size_t k = 0; k < t.size(); ++k) {
        os << detail::format_double(t[k]);
        for (const auto& s : series) os << ',' << detail::format_double(s.values[k]);
        os << '\n';
    }
    detail::write_atomically(path, os.str());
}

}  // namespace ndc
