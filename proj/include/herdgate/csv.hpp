#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "herdgate/error.hpp"

namespace herdgate::csv {

// Shortest decimal string that round-trips the exact double.
inline std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    require(ec == std::errc(), "double formatting failed");
    return std::string(buf, p);
}

inline std::string format_int(std::int64_t v) {
    char buf[24];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    require(ec == std::errc(), "int formatting failed");
    return std::string(buf, p);
}

inline double parse_double(std::string_view s, const std::string& context) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && p == s.data() + s.size(),
            context + ": bad number '" + std::string(s) + "'");
    return v;
}

inline std::int64_t parse_int(std::string_view s, const std::string& context) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && p == s.data() + s.size(),
            context + ": bad integer '" + std::string(s) + "'");
    return v;
}

// The dialect is deliberately plain: no quoting, so no cell may contain a
// comma, quote, or newline.  Every writer in this project validates that.
inline void check_cell(std::string_view cell, const std::string& context) {
    for (char c : cell)
        require(c != ',' && c != '"' && c != '\n' && c != '\r',
                context + ": cell contains a reserved character: '" + std::string(cell) + "'");
}

inline std::vector<std::string> split_row(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            cells.emplace_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return cells;
}

inline std::string join_row(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out.push_back(',');
        out += cells[i];
    }
    out.push_back('\n');
    return out;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline Table read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    std::string content = ss.str();

    Table t;
    std::size_t pos = 0;
    bool first = true;
    std::size_t line_no = 0;
    while (pos < content.size()) {
        std::size_t eol = content.find('\n', pos);
        std::string_view line(content.data() + pos,
                              (eol == std::string::npos ? content.size() : eol) - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = (eol == std::string::npos) ? content.size() : eol + 1;
        ++line_no;
        if (line.empty() && pos >= content.size()) break;
        require(line.find('"') == std::string_view::npos,
                path + " line " + std::to_string(line_no) + ": quoted cells are not supported");
        if (first) {
            t.header = split_row(line);
            first = false;
        } else {
            t.rows.push_back(split_row(line));
        }
    }
    require(!first, "'" + path + "' is empty (missing header row)");
    return t;
}

class Writer {
public:
    explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
        require(out_.good(), "cannot write '" + path + "'");
    }

    void row(const std::vector<std::string>& cells) {
        for (const auto& c : cells) check_cell(c, path_);
        out_ << join_row(cells);
    }

    void close() {
        out_.close();
        require(out_.good(), "write failed for '" + path_ + "'");
    }

private:
    std::string path_;
    std::ofstream out_;
};

} // namespace herdgate::csv
