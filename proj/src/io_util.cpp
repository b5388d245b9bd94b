#include "sftm/io_util.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>

#include <array>
#include <charconv>
#include <fstream>
#include <memory>
#include <sstream>

#include "sftm/error.hpp"

namespace sftm::io {

namespace fs = std::filesystem;

std::string format_double(double v) {
  std::array<char, 40> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::general, 17);
  return std::string(buf.data(), res.ptr);
}

double parse_double(std::string_view token) {
  while (!token.empty() && (token.front() == ' ' || token.front() == '\t')) token.remove_prefix(1);
  while (!token.empty() && (token.back() == ' ' || token.back() == '\t' || token.back() == '\r')) {
    token.remove_suffix(1);
  }
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (token.empty() || res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
    throw FormatError("not a number: '" + std::string(token) + "'");
  }
  return v;
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    std::string_view line = text.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.push_back(line);
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_matrix_csv(const fs::path& file, const Matrix& m) {
  std::string out;
  out.reserve(m.rows() * m.cols() * 24);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out.push_back(',');
      out += format_double(m(r, c));
    }
    out.push_back('\n');
  }
  write_file_atomic(file, out);
}

Matrix read_matrix_csv(const fs::path& file, std::size_t expected_rows, std::size_t expected_cols) {
  const std::string text = read_file(file);
  if (!text.empty() && text.back() != '\n') {
    throw FormatError(file.string() + ": truncated (missing final newline)");
  }
  const auto lines = lines_of(text);
  const std::size_t cols = lines.empty() ? expected_cols : split(lines.front(), ',').size();
  Matrix m(lines.size(), cols);
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto fields = split(lines[r], ',');
    if (fields.size() != cols) {
      std::ostringstream msg;
      msg << file.string() << ": row " << r << " has " << fields.size() << " fields, expected "
          << cols;
      throw FormatError(msg.str());
    }
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = parse_double(fields[c]);
  }
  if ((expected_rows && m.rows() != expected_rows) || (expected_cols && m.cols() != expected_cols)) {
    std::ostringstream msg;
    msg << file.string() << ": shape " << m.rows() << "x" << m.cols() << ", expected "
        << expected_rows << "x" << expected_cols;
    throw FormatError(msg.str());
  }
  return m;
}

const std::vector<double>& Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return columns[i];
  }
  throw FormatError("missing column '" + std::string(name) + "'");
}

Table read_table_csv(const fs::path& file) {
  const std::string text = read_file(file);
  const auto lines = lines_of(text);
  if (lines.empty()) throw FormatError(file.string() + ": empty table");
  Table t;
  for (auto h : split(lines.front(), ',')) {
    while (!h.empty() && h.back() == ' ') h.remove_suffix(1);
    while (!h.empty() && h.front() == ' ') h.remove_prefix(1);
    t.header.emplace_back(h);
  }
  t.columns.resize(t.header.size());
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split(lines[r], ',');
    if (fields.size() != t.header.size()) {
      throw FormatError(file.string() + ": ragged row " + std::to_string(r));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) t.columns[c].push_back(parse_double(fields[c]));
  }
  return t;
}

void write_file_atomic(const fs::path& file, std::string_view content) {
  fs::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_bytes(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw IoError("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

std::string sha256_file(const fs::path& file) { return sha256_bytes(read_file(file)); }

DirectoryLock::DirectoryLock(const fs::path& dir) : lock_(dir / ".lock") {
  const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw IoError("output directory " + dir.string() +
                  " is locked by another run (remove " + lock_.string() + " if stale)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(lock_, ec);
}

}  // namespace sftm::io
