#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rbsde {

/// Shortest round-trip decimal form with '.' separator; NaN prints as an
/// empty cell.
std::string format_double(double value);

/// Accumulates rows of comma-separated cells with LF line endings.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);

    CsvWriter& cell(std::string_view text);
    CsvWriter& cell(double value);
    CsvWriter& cell(long long value);
    CsvWriter& cell(unsigned long long value);
    CsvWriter& cell(int value) { return cell(static_cast<long long>(value)); }
    CsvWriter& cell(std::size_t value) { return cell(static_cast<unsigned long long>(value)); }
    CsvWriter& end_row();

    const std::string& str() const noexcept { return text_; }

private:
    std::size_t columns_;
    std::size_t in_row_ = 0;
    std::string text_;
};

/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Splits one CSV line on commas (no quoting).
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace rbsde
