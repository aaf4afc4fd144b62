#ifndef ZIBMED_IO_HPP
#define ZIBMED_IO_HPP

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "zibmed/core.hpp"
#include "zibmed/screen.hpp"

namespace zibmed {

class CsvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

inline double parse_real(const std::string& cell, std::size_t line_no, const std::string& col) {
    const std::string t = trim(cell);
    if (t.empty())
        throw CsvError("line " + std::to_string(line_no) + ", column '" + col + "': missing value");
    double v = 0.0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw CsvError("line " + std::to_string(line_no) + ", column '" + col +
                       "': malformed numeric cell '" + t + "'");
    return v;
}

inline std::uint64_t parse_lib_size(const std::string& cell, std::size_t line_no,
                                    const std::string& col) {
    const double v = parse_real(cell, line_no, col);
    if (!(v >= 1.0) || v != std::floor(v))
        throw CsvError("line " + std::to_string(line_no) + ", column '" + col +
                       "': lib_size must be a positive integer, got '" + trim(cell) + "'");
    return static_cast<std::uint64_t>(v);
}

inline void write_real(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

}  // namespace detail

// A data file is either a single-mediator dataset (column `m`) or a taxa
// table (every non-required numeric column is one taxon's RA).
using IngestResult = std::variant<Dataset, TaxaTable>;

inline IngestResult ingest_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw CsvError("'" + path + "': empty file");
    const std::vector<std::string> rawhdr = detail::split_csv_line(line);
    std::vector<std::string> header;
    header.reserve(rawhdr.size());
    for (const auto& h : rawhdr) header.push_back(detail::trim(h));

    std::ptrdiff_t iy = -1, ix = -1, il = -1;
    std::vector<std::size_t> taxa_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "y") iy = static_cast<std::ptrdiff_t>(c);
        else if (header[c] == "x") ix = static_cast<std::ptrdiff_t>(c);
        else if (header[c] == "lib_size") il = static_cast<std::ptrdiff_t>(c);
        else if (header[c].empty()) throw CsvError("'" + path + "': empty column name in header");
        else taxa_cols.push_back(c);
    }
    if (iy < 0 || ix < 0 || il < 0)
        throw CsvError("'" + path + "': header must contain y, x and lib_size columns");
    if (taxa_cols.empty())
        throw CsvError("'" + path + "': no mediator column found");

    const bool single = taxa_cols.size() == 1 && header[taxa_cols[0]] == "m";
    TaxaTable table;
    for (std::size_t c : taxa_cols) table.taxa_names.push_back(header[c]);

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw CsvError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()));
        table.y.push_back(detail::parse_real(cells[static_cast<std::size_t>(iy)], line_no, "y"));
        table.x.push_back(detail::parse_real(cells[static_cast<std::size_t>(ix)], line_no, "x"));
        table.lib_size.push_back(
            detail::parse_lib_size(cells[static_cast<std::size_t>(il)], line_no, "lib_size"));
        std::vector<double> row;
        row.reserve(taxa_cols.size());
        for (std::size_t c : taxa_cols) {
            const double v = detail::parse_real(cells[c], line_no, header[c]);
            if (!(v >= 0.0) || v >= 1.0)
                throw CsvError("line " + std::to_string(line_no) + ", column '" + header[c] +
                               "': relative abundance must lie in [0,1)");
            row.push_back(v);
        }
        table.abundance.push_back(std::move(row));
    }
    if (table.y.empty()) throw CsvError("'" + path + "': no data rows");
    validate(table);
    if (!single) return table;
    Dataset d = taxon_dataset(table, 0);
    validate(d);
    return d;
}

inline void write_dataset_csv(const Dataset& data, const std::string& path) {
    std::string out = "y,x,lib_size,m\n";
    for (const auto& r : data.records) {
        detail::write_real(out, r.y);
        out += ',';
        detail::write_real(out, r.x);
        out += ',' + std::to_string(r.lib_size) + ',';
        detail::write_real(out, r.m_obs);
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << out;
}

inline void write_taxa_csv(const TaxaTable& table, const std::string& path) {
    std::string out = "y,x,lib_size";
    for (const auto& name : table.taxa_names) out += ',' + name;
    out += '\n';
    for (std::size_t i = 0; i < table.n(); ++i) {
        detail::write_real(out, table.y[i]);
        out += ',';
        detail::write_real(out, table.x[i]);
        out += ',' + std::to_string(table.lib_size[i]);
        for (double v : table.abundance[i]) {
            out += ',';
            detail::write_real(out, v);
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << out;
}

}  // namespace zibmed

#endif  // ZIBMED_IO_HPP
