#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace tbudget {

// Fixed 12-significant-digit rendering used for every numeric CSV cell.
std::string format_number(double value);
std::string format_number(long value);

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);

  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
};

}  // namespace tbudget
