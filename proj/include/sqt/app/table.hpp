#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "sqt/errors.hpp"

namespace sqt::app {

inline constexpr int kSchemaVersion = 1;

using Cell = std::variant<double, std::string>;

/// Column-named rows, the unit every command emits.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row) {
        if (row.size() != columns.size())
            throw InvalidArgument("Table: row has " + std::to_string(row.size()) + " cells, expected " +
                                  std::to_string(columns.size()));
        rows.push_back(std::move(row));
    }

    std::size_t column(const std::string& name) const {
        for (std::size_t j = 0; j < columns.size(); ++j)
            if (columns[j] == name) return j;
        throw InvalidArgument("Table: no column '" + name + "'");
    }

    double number(std::size_t row, const std::string& name) const {
        const Cell& c = rows.at(row).at(column(name));
        if (const double* x = std::get_if<double>(&c)) return *x;
        throw InvalidArgument("Table: column '" + name + "' is not numeric");
    }

    std::string text(std::size_t row, const std::string& name) const {
        const Cell& c = rows.at(row).at(column(name));
        if (const std::string* s = std::get_if<std::string>(&c)) return *s;
        throw InvalidArgument("Table: column '" + name + "' is not text");
    }
};

/// A CSV file as written by write_csv: header comments plus a table.
struct CsvDocument {
    std::vector<std::pair<std::string, std::string>> header;  // "# key = value" lines
    Table table;
};

inline std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace detail {

inline std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else if (c == '\n' || c == '\r') out += ' ';
        else out += c;
    }
    return out + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false, was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = was_quoted = true;
        } else if (c == ',') {
            out.push_back(was_quoted ? "\"" + cur : cur);
            cur.clear();
            was_quoted = false;
        } else {
            cur += c;
        }
    }
    if (quoted) throw InvalidArgument("read_csv: unterminated quote");
    out.push_back(was_quoted ? "\"" + cur : cur);
    return out;
}

/// Numbers parse as double; quoted cells and anything else stay text.
inline Cell parse_cell(const std::string& raw) {
    if (!raw.empty() && raw[0] == '"') return raw.substr(1);
    if (raw.empty()) return std::string();
    char* end = nullptr;
    const double x = std::strtod(raw.c_str(), &end);
    if (end == raw.c_str() + raw.size()) return x;
    return raw;
}

inline bool looks_numeric(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

}  // namespace detail

/// Comma-separated, '#' header comments, numbers with 17 significant digits.
inline void write_csv(std::ostream& out, const Table& table,
                      const std::vector<std::pair<std::string, std::string>>& header) {
    for (const auto& [k, v] : header) out << "# " << k << " = " << v << '\n';
    for (std::size_t j = 0; j < table.columns.size(); ++j) out << (j ? "," : "") << table.columns[j];
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out << ',';
            if (const double* x = std::get_if<double>(&row[j])) {
                out << format_number(*x);
            } else {
                const std::string& s = std::get<std::string>(row[j]);
                // text that would read back as a number is quoted
                out << (detail::looks_numeric(s) ? "\"" + s + "\"" : detail::quote_if_needed(s));
            }
        }
        out << '\n';
    }
}

inline CsvDocument read_csv(std::istream& in) {
    CsvDocument doc;
    std::string line;
    bool have_columns = false;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find(" = ");
            if (eq != std::string::npos) doc.header.emplace_back(line.substr(2, eq - 2), line.substr(eq + 3));
            continue;
        }
        const auto cells = detail::split_csv_line(line);
        if (!have_columns) {
            doc.table.columns = cells;
            have_columns = true;
            continue;
        }
        if (cells.size() != doc.table.columns.size())
            throw InvalidArgument("read_csv: line " + std::to_string(number) + " has " + std::to_string(cells.size()) +
                                  " cells, expected " + std::to_string(doc.table.columns.size()));
        std::vector<Cell> row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(detail::parse_cell(c));
        doc.table.rows.push_back(std::move(row));
    }
    if (!have_columns) throw InvalidArgument("read_csv: no column line");
    return doc;
}

/// Machine-readable form of one command's output.
inline nlohmann::json to_json(const std::string& command, const Table& table,
                              const std::vector<std::pair<std::string, std::string>>& header,
                              const nlohmann::json& metadata = nlohmann::json::object()) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = command;
    nlohmann::json cfg = nlohmann::json::object();
    for (const auto& [k, v] : header) cfg[k] = v;
    j["config"] = cfg;
    j["columns"] = table.columns;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : table.rows) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& c : row) {
            if (const double* x = std::get_if<double>(&c)) {
                if (std::isfinite(*x)) r.push_back(*x);
                else r.push_back(nullptr);
            } else {
                r.push_back(std::get<std::string>(c));
            }
        }
        rows.push_back(std::move(r));
    }
    j["rows"] = std::move(rows);
    j["metadata"] = metadata;
    return j;
}

}  // namespace sqt::app
