#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace unpack {

/// A plain report table. Cells are preformatted strings.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> notes;  // written as leading "# " lines

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
  void write_tsv(std::ostream& out) const;
  /// Column-aligned, for the terminal.
  void write_pretty(std::ostream& out) const;
};

std::string fmt(double v, int decimals = 4);
std::string fmt_pct(double fraction, int decimals = 1);        // 0.97 -> "97.0%"
std::string fmt_signed(double v, int decimals = 1);            // 7.3 -> "+7.3"
std::string fmt_signed_pct(double percent, int decimals = 1);  // 39.9 -> "+39.9%"

/// Non-empty lines with leading/trailing blanks stripped; lines starting with '#' are skipped.
std::vector<std::string> read_lines(const std::filesystem::path& path);
std::vector<std::string> split(const std::string& s, char sep);
std::string trim(const std::string& s);

void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace unpack
