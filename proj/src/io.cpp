#include "toolmimic/io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace toolmimic {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_doubles(const std::vector<double>& vs) {
  std::string out;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (i) out += ' ';
    out += format_double(vs[i]);
  }
  return out;
}

LineReader::LineReader(const std::string* source, const std::string& line,
                       int line_no)
    : source_(source), line_(line), line_no_(line_no) {}

bool LineReader::at_end() const {
  std::size_t p = pos_;
  while (p < line_.size() && std::isspace(static_cast<unsigned char>(line_[p])))
    ++p;
  return p >= line_.size() || line_[p] == '#';
}

std::string LineReader::next_token() {
  while (pos_ < line_.size() &&
         std::isspace(static_cast<unsigned char>(line_[pos_])))
    ++pos_;
  if (pos_ >= line_.size() || line_[pos_] == '#') {
    fail("unexpected end of line");
  }
  const std::size_t start = pos_;
  while (pos_ < line_.size() &&
         !std::isspace(static_cast<unsigned char>(line_[pos_])))
    ++pos_;
  return line_.substr(start, pos_ - start);
}

double LineReader::next_double() {
  const std::string tok = next_token();
  double value = 0.0;
  const char* end = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(tok.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    fail("expected a number, got '" + tok + "'");
  }
  if (!std::isfinite(value)) {
    fail("non-finite value '" + tok + "'");
  }
  return value;
}

std::int64_t LineReader::next_int() {
  const std::string tok = next_token();
  std::int64_t value = 0;
  const char* end = tok.data() + tok.size();
  const auto [ptr, ec] = std::from_chars(tok.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    fail("expected an integer, got '" + tok + "'");
  }
  return value;
}

void LineReader::expect(const std::string& literal) {
  const std::string tok = next_token();
  if (tok != literal) {
    fail("expected '" + literal + "', got '" + tok + "'");
  }
}

void LineReader::fail(const std::string& message) const {
  const std::string where = source_ ? *source_ : std::string("<line>");
  throw std::runtime_error(where + ":" + std::to_string(line_no_) + ": " +
                           message);
}

TextFile::TextFile(const std::string& path) : path_(path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines_.push_back(line);
  }
}

bool TextFile::next_line() {
  while (cursor_ < lines_.size()) {
    line_ = lines_[cursor_];
    line_no_ = static_cast<int>(cursor_) + 1;
    ++cursor_;
    std::size_t p = 0;
    while (p < line_.size() &&
           std::isspace(static_cast<unsigned char>(line_[p])))
      ++p;
    if (p < line_.size() && line_[p] != '#') return true;
  }
  return false;
}

LineReader TextFile::reader() const {
  return LineReader(&path_, line_, line_no_);
}

namespace {
std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace

std::string hash_bytes(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(bytes.data(), bytes.size())));
  return buf;
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hash_bytes(ss.str());
}

}  // namespace toolmimic
