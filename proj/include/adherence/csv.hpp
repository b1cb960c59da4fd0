#pragma once

#include <optional>
#include <string>
#include <vector>

namespace adherence::csv {

/// Parse one CSV record; handles quoted fields with embedded commas,
/// doubled quotes, and newlines already joined into `line`.
std::vector<std::string> split_record(const std::string& line);

/// Quote a field if needed and append it to `out`.
void append_field(std::string& out, const std::string& field);

std::string join_record(const std::vector<std::string>& fields);

/// Read an entire CSV file (multi-line quoted fields supported).
/// First row is returned as-is; callers interpret headers.
std::vector<std::vector<std::string>> read_file(const std::string& path);

void write_file(const std::string& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows);

/// Locale-independent numeric formatting used for all emitted reports.
std::string format_double(double v, int precision = 9);

std::optional<double> parse_double(const std::string& s);
std::optional<long long> parse_int(const std::string& s);

}  // namespace adherence::csv
