#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "qg/errors.hpp"

namespace qg {

/// Formats a real with 17 significant digits ('.' decimal point), enough to
/// round-trip an IEEE double exactly.
inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

/// Comma-separated writer with a mandatory header row. One writer per file;
/// all values pass through format_real so reruns are byte-identical.
class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_)
            throw ConfigError("cannot open CSV output: " + path);
        write_row_raw(header);
        columns_ = header.size();
    }

    void write_row(const std::vector<double>& values) {
        if (values.size() != columns_)
            throw ConfigError("CSV row width mismatch");
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values) cells.push_back(format_real(v));
        write_row_raw(cells);
    }

    void write_row_raw(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

  private:
    std::ofstream out_;
    std::size_t columns_ = 0;
};

} // namespace qg
