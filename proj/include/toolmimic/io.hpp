#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace toolmimic {

/// Format a double so that parsing it back reproduces the value bit-exactly.
std::string format_double(double v);
std::string format_doubles(const std::vector<double>& vs);

/// Tokenizer for one line of a delimited-text artifact file. Errors carry
/// the file name and line number.
class LineReader {
 public:
  LineReader(const std::string* source, const std::string& line, int line_no);

  bool at_end() const;
  std::string next_token();
  double next_double();
  std::int64_t next_int();
  /// Consume a token and fail unless it equals `literal`.
  void expect(const std::string& literal);
  [[noreturn]] void fail(const std::string& message) const;

  int line_number() const { return line_no_; }

 private:
  const std::string* source_;
  std::string line_;
  std::size_t pos_ = 0;
  int line_no_;
};

/// Line-oriented reader that skips blank lines and '#' comments.
class TextFile {
 public:
  explicit TextFile(const std::string& path);

  /// Advance to the next non-empty, non-comment line. False at EOF.
  bool next_line();
  LineReader reader() const;
  const std::string& current_line() const { return line_; }
  int line_number() const { return line_no_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::vector<std::string> lines_;
  std::string line_;
  std::size_t cursor_ = 0;
  int line_no_ = 0;
};

/// FNV-1a 64-bit over a file's bytes, rendered as 16 hex digits.
/// Used for artifact content hashes in run manifests.
std::string hash_file(const std::string& path);
std::string hash_bytes(const std::string& bytes);

}  // namespace toolmimic
