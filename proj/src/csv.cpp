#include "rbsde/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>

#include "rbsde/error.hpp"

namespace rbsde {

std::string format_double(double value) {
    if (std::isnan(value)) return {};
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), res.ptr);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    for (const auto& h : header) cell(h);
    end_row();
}

CsvWriter& CsvWriter::cell(std::string_view text) {
    if (in_row_ > 0) text_ += ',';
    text_ += text;
    ++in_row_;
    return *this;
}

CsvWriter& CsvWriter::cell(double value) { return cell(std::string_view(format_double(value))); }

CsvWriter& CsvWriter::cell(long long value) { return cell(std::string_view(std::to_string(value))); }

CsvWriter& CsvWriter::cell(unsigned long long value) { return cell(std::string_view(std::to_string(value))); }

CsvWriter& CsvWriter::end_row() {
    if (in_row_ != columns_)
        fail(ErrorCode::InvalidArgument,
             "csv row has " + std::to_string(in_row_) + " cells, header has " + std::to_string(columns_));
    text_ += '\n';
    in_row_ = 0;
    return *this;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::ConfigError, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) fail(ErrorCode::ConfigError, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        cells.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r') cells.back().pop_back();
    return cells;
}

}  // namespace rbsde
