#include "scm/csv.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

#include "scm/errors.hpp"

namespace scm::csv {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(current);
            current.clear();
        } else if (c != '\r') {
            current.push_back(c);
        }
    }
    fields.push_back(current);
    return fields;
}

Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open CSV file: " + path.string());
    }
    Table table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_line(line);
        if (table.header.empty()) {
            table.header = std::move(fields);
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw DataError("malformed CSV row " + std::to_string(line_no) + " in " +
                            path.string() + ": expected " +
                            std::to_string(table.header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
    }
    if (table.header.empty()) {
        throw DataError("empty CSV file: " + path.string());
    }
    return table;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot write file: " + tmp.string());
        }
        out << content;
        if (!out.good()) {
            throw DataError("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string format_sig6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string format_fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string format_exact(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return buf;
    }
    return std::string(buf, ptr);
}

std::optional<double> parse_double(const std::string& field) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end != begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
    if (begin == end) return std::nullopt;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) return std::nullopt;
    return value;
}

std::optional<int> parse_int(const std::string& field) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end != begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
    if (begin == end) return std::nullopt;
    int value = 0;
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) return std::nullopt;
    return value;
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open file for digest: " + path.string());
    }
    std::uint64_t hash = 0xcbf29ce484222325ull;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 0x100000001b3ull;
        }
    }
    char out[32];
    std::snprintf(out, sizeof(out), "fnv1a64:%016" PRIx64, hash);
    return out;
}

}  // namespace scm::csv
