#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace invmm {

/// Shortest round-trip decimal form of a double (std::to_chars); infinities
/// print as "inf"/"-inf". Used for every numeric export so identical runs
/// produce identical bytes.
std::string format_double(double v);

/// One CSV line from already-formatted cells, '\n' terminated.
std::string csv_line(const std::vector<std::string>& cells);

/// Write a whole file atomically-ish (temp + rename), '\n' line endings.
void write_text_file(const std::filesystem::path& path, const std::string& content);

std::string read_text_file(const std::filesystem::path& path);

} // namespace invmm
