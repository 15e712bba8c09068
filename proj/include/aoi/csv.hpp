#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

namespace aoi {

// Shortest round-trip decimal form; identical output on every run.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string format_number(long long x) { return std::to_string(x); }
inline std::string format_number(int x) { return std::to_string(x); }
inline std::string format_number(long x) { return std::to_string(x); }
inline std::string format_number(unsigned long x) { return std::to_string(x); }

// Thresholds that never trigger are written as an empty field.
template <class T>
std::string format_number(const std::optional<T>& x) {
  return x ? format_number(*x) : std::string();
}

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  template <class... Ts>
  void add(const Ts&... cells) {
    std::vector<std::string> row;
    (row.push_back(cell(cells)), ...);
    rows_.push_back(std::move(row));
  }

  std::size_t size() const { return rows_.size(); }
  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  std::string str() const {
    std::string out;
    append_row(out, header_);
    for (const auto& r : rows_) append_row(out, r);
    return out;
  }

 private:
  template <class T>
  static std::string cell(const T& v) {
    if constexpr (std::is_convertible_v<T, std::string_view>) return std::string(std::string_view(v));
    else if constexpr (std::is_same_v<T, bool>) return v ? "1" : "0";
    else return format_number(v);
  }
  static void append_row(std::string& out, const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ',';
      out += r[i];
    }
    out += '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Writes through a temporary sibling and renames, so readers never see a
// partial file. Throws std::ios_base::failure on I/O errors.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::ios_base::failure("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::ios_base::failure("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::ios_base::failure("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace aoi
