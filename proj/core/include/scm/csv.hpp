#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace scm::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // every row has header.size() fields
};

// Reads a comma-separated file with a header row. Blank lines are skipped,
// trailing '\r' is stripped, empty fields are kept as empty strings.
// Throws DataError on rows whose field count differs from the header.
Table read_table(const std::filesystem::path& path);

// Splits one CSV line. No quoting support: the panel format forbids commas
// inside fields.
std::vector<std::string> split_line(const std::string& line);

// Atomic write: writes to `path` + ".tmp" and renames into place.
void write_file(const std::filesystem::path& path, const std::string& content);

// Number rendering. Result tables use 6 significant digits; weights use
// 6 decimal places; panel re-emission uses shortest round-trip form so a
// write/read cycle reproduces every cell bit-for-bit.
std::string format_sig6(double v);
std::string format_fixed6(double v);
std::string format_exact(double v);

// Strict numeric parsing helpers used by the panel loader.
std::optional<double> parse_double(const std::string& field);  // nullopt on garbage
std::optional<int> parse_int(const std::string& field);

// 64-bit FNV-1a over the file bytes, rendered as "fnv1a64:<hex>". Used to
// pin the data vintage in reports and expectation files.
std::string file_digest(const std::filesystem::path& path);

}  // namespace scm::csv
