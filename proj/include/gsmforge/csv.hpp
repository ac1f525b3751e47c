#pragma once

#include <string>
#include <vector>

namespace gsmforge {

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name, -1 when absent.
    int col(const std::string& name) const;
    const std::string& cell(std::size_t row, int column) const;
    double num(std::size_t row, int column) const;
};

CsvTable read_csv(const std::string& path);

}  // namespace gsmforge
