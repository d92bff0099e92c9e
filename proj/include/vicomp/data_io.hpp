#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vicomp/fitting.hpp"

namespace vicomp {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(toml_trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

struct CsvTable {
    std::map<std::string, size_t> columns;
    std::vector<std::pair<int, std::vector<std::string>>> rows; // line number + fields

    size_t column(const std::string& name) const {
        auto it = columns.find(name);
        if (it == columns.end()) throw IoError("CSV: missing required column '" + name + "'");
        return it->second;
    }

    double number(const std::pair<int, std::vector<std::string>>& row, size_t col) const {
        const std::string& s = row.second[col];
        try {
            size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw IoError("CSV line " + std::to_string(row.first) + ": bad number '" + s + "'");
        }
    }
};

inline CsvTable read_csv(std::istream& is) {
    CsvTable t;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (toml_trim(line).empty()) continue;
        auto fields = split_csv_line(line);
        if (t.columns.empty()) {
            for (size_t i = 0; i < fields.size(); ++i) t.columns[fields[i]] = i;
            continue;
        }
        if (fields.size() != t.columns.size())
            throw IoError("CSV line " + std::to_string(line_no) + ": expected " +
                          std::to_string(t.columns.size()) + " fields, got " +
                          std::to_string(fields.size()));
        t.rows.emplace_back(line_no, std::move(fields));
    }
    if (t.columns.empty()) throw IoError("CSV: empty file (no header)");
    if (t.rows.empty()) throw IoError("CSV: no data rows");
    return t;
}

} // namespace detail

// columns: stimulus_id, width_deg, side, response, ci_low, ci_high
inline std::vector<ObserverDatum> read_achromatic_csv(std::istream& is) {
    const auto t = detail::read_csv(is);
    const size_t c_id = t.column("stimulus_id");
    const size_t c_w = t.column("width_deg");
    const size_t c_side = t.column("side");
    const size_t c_r = t.column("response");
    const size_t c_lo = t.column("ci_low");
    const size_t c_hi = t.column("ci_high");
    std::vector<ObserverDatum> out;
    for (const auto& row : t.rows) {
        ObserverDatum d;
        d.stimulus_id = row.second[c_id];
        d.bar_width_deg = t.number(row, c_w);
        d.side = row.second[c_side];
        d.response = t.number(row, c_r);
        d.ci_low = t.number(row, c_lo);
        d.ci_high = t.number(row, c_hi);
        if (d.side != "white" && d.side != "black")
            throw IoError("CSV line " + std::to_string(row.first) +
                          ": side must be 'white' or 'black'");
        d.validate_ci();
        out.push_back(std::move(d));
    }
    return out;
}

// columns: stimulus_id, set, l, a, b, ci_low, ci_high
inline std::vector<ObserverDatum> read_chromatic_csv(std::istream& is) {
    const auto t = detail::read_csv(is);
    const size_t c_id = t.column("stimulus_id");
    const size_t c_set = t.column("set");
    const size_t c_l = t.column("l");
    const size_t c_a = t.column("a");
    const size_t c_b = t.column("b");
    std::vector<ObserverDatum> out;
    for (const auto& row : t.rows) {
        ObserverDatum d;
        d.stimulus_id = row.second[c_id];
        d.color_set = static_cast<int>(t.number(row, c_set));
        d.response_lab = {t.number(row, c_l), t.number(row, c_a), t.number(row, c_b)};
        out.push_back(std::move(d));
    }
    return out;
}

// columns: stimulus_id, test_l/a/b, first_l/a/b, second_l/a/b, shift
inline std::vector<MonnierCondition> read_monnier_csv(std::istream& is,
                                                      const RingPatternSpec& geometry) {
    const auto t = detail::read_csv(is);
    const size_t tl = t.column("test_l"), ta = t.column("test_a"), tb = t.column("test_b");
    const size_t fl = t.column("first_l"), fa = t.column("first_a"), fb = t.column("first_b");
    const size_t sl = t.column("second_l"), sa = t.column("second_a"), sb = t.column("second_b");
    const size_t sh = t.column("shift");
    std::vector<MonnierCondition> out;
    for (const auto& row : t.rows) {
        MonnierCondition c;
        c.spec = geometry;
        c.spec.test_color = {t.number(row, tl), t.number(row, ta), t.number(row, tb)};
        c.spec.inducer_colors[0] = {t.number(row, fl), t.number(row, fa), t.number(row, fb)};
        c.spec.inducer_colors[1] = {t.number(row, sl), t.number(row, sa), t.number(row, sb)};
        c.observed_shift = t.number(row, sh);
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace vicomp
