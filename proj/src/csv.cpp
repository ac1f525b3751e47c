#include "gsmforge/csv.hpp"

#include <fstream>
#include <stdexcept>

namespace gsmforge {

namespace {

std::vector<std::string> split_line(const std::string& line) {
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

}  // namespace

int CsvTable::col(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<int>(i);
    return -1;
}

const std::string& CsvTable::cell(std::size_t row, int column) const {
    return rows.at(row).at(static_cast<std::size_t>(column));
}

double CsvTable::num(std::size_t row, int column) const {
    const std::string& s = cell(row, column);
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw std::runtime_error("csv cell is not numeric: '" + s + "'");
    }
}

CsvTable read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open csv " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("csv " + path + " is empty (no header)");
    t.columns = split_line(line);
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != t.columns.size())
            throw std::runtime_error("csv " + path + " row has " + std::to_string(cells.size()) +
                                     " cells, header has " + std::to_string(t.columns.size()));
        t.rows.push_back(std::move(cells));
    }
    return t;
}

}  // namespace gsmforge
