#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace srtree {

// Minimal CSV support: comma separator, optional double quotes around fields
// (with "" as an escaped quote), no embedded newlines. That covers every file
// this project reads or writes.

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') { cur += '"'; ++i; }
                else quoted = false;
            } else cur += c;
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows; // each row has header.size() cells
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open CSV file: " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty CSV file: " + path);
    t.header = split_csv_line(line);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != t.header.size())
            throw std::runtime_error("ragged CSV row in " + path + ": expected " +
                                     std::to_string(t.header.size()) + " cells, got " +
                                     std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
    }
    return t;
}

inline std::string csv_escape(const std::string& s) {
    bool needs = s.find_first_of(",\"\n") != std::string::npos;
    if (!needs) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

inline void write_csv(const std::string& path, const CsvTable& t) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write CSV file: " + path);
    for (std::size_t j = 0; j < t.header.size(); ++j)
        out << (j ? "," : "") << csv_escape(t.header[j]);
    out << "\n";
    for (const auto& row : t.rows) {
        for (std::size_t j = 0; j < row.size(); ++j)
            out << (j ? "," : "") << csv_escape(row[j]);
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

// Shortest clean decimal rendering for thresholds and predictions in text output.
inline std::string format_number(double v, int max_digits = 10) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", max_digits, v);
    return std::string(buf);
}

} // namespace srtree
