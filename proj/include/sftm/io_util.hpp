#pragma once

// Locale-independent number formatting, CSV matrices, checksums and
// atomic writes shared by the dataset, estimator and CLI.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sftm/matrix.hpp"

namespace sftm::io {

/// Exactly 17 significant digits (lossless for binary64), no locale.
std::string format_double(double v);
/// Strict parse of a full token; throws FormatError.
double parse_double(std::string_view token);

/// Header-less CSV, one matrix row per line.
void write_matrix_csv(const std::filesystem::path& file, const Matrix& m);
/// Throws FormatError on ragged rows, bad numbers, or when the shape
/// differs from the expected one (pass 0 to accept any).
Matrix read_matrix_csv(const std::filesystem::path& file, std::size_t expected_rows = 0,
                       std::size_t expected_cols = 0);

/// Reads a header-bearing CSV into named columns.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
  const std::vector<double>& column(std::string_view name) const;
};
Table read_table_csv(const std::filesystem::path& file);

/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& file, std::string_view content);
std::string read_file(const std::filesystem::path& file);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& file);
std::string sha256_bytes(std::string_view bytes);

/// Exclusive lockfile `<dir>/.lock`; throws IoError if another run holds it.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path lock_;
};

}  // namespace sftm::io
