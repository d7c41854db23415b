#pragma once

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace eqcon_cli {

// Streaming JSON writer with a fixed, locale-independent number format.
// Doubles are printed with %.17g so every value round-trips exactly and two
// runs that compute the same numbers emit the same bytes.
class JsonWriter {
 public:
  JsonWriter& begin_object() {
    comma();
    buf_ += '{';
    stack_.push_back(false);
    return *this;
  }

  JsonWriter& end_object() {
    buf_ += '}';
    stack_.pop_back();
    mark();
    return *this;
  }

  JsonWriter& begin_array() {
    comma();
    buf_ += '[';
    stack_.push_back(false);
    return *this;
  }

  JsonWriter& end_array() {
    buf_ += ']';
    stack_.pop_back();
    mark();
    return *this;
  }

  JsonWriter& key(const std::string& k) {
    comma();
    append_escaped(k);
    buf_ += ':';
    pending_value_ = true;
    return *this;
  }

  JsonWriter& value(double v) {
    comma();
    char tmp[32];
    std::snprintf(tmp, sizeof(tmp), "%.17g", v);
    buf_ += tmp;
    mark();
    return *this;
  }

  JsonWriter& value(std::int64_t v) {
    comma();
    char tmp[32];
    std::snprintf(tmp, sizeof(tmp), "%" PRId64, v);
    buf_ += tmp;
    mark();
    return *this;
  }

  JsonWriter& value(std::uint64_t v) {
    comma();
    char tmp[32];
    std::snprintf(tmp, sizeof(tmp), "%" PRIu64, v);
    buf_ += tmp;
    mark();
    return *this;
  }

  JsonWriter& value(int v) { return value(static_cast<std::int64_t>(v)); }

  JsonWriter& value(bool v) {
    comma();
    buf_ += v ? "true" : "false";
    mark();
    return *this;
  }

  JsonWriter& value(const std::string& v) {
    comma();
    append_escaped(v);
    mark();
    return *this;
  }

  JsonWriter& value(const char* v) { return value(std::string(v)); }

  // k-vector as a JSON array.
  JsonWriter& vector(const double* v, std::size_t n) {
    begin_array();
    for (std::size_t i = 0; i < n; ++i) value(v[i]);
    return end_array();
  }

  // rows x cols row-major matrix as an array of row arrays.
  JsonWriter& matrix(const double* m, std::size_t rows, std::size_t cols) {
    begin_array();
    for (std::size_t r = 0; r < rows; ++r) vector(m + r * cols, cols);
    return end_array();
  }

  const std::string& str() const { return buf_; }

 private:
  void comma() {
    if (pending_value_) {
      pending_value_ = false;
      return;
    }
    if (!stack_.empty() && stack_.back()) buf_ += ',';
  }

  void mark() {
    if (!stack_.empty()) stack_.back() = true;
  }

  void append_escaped(const std::string& s) {
    buf_ += '"';
    for (const char ch : s) {
      switch (ch) {
        case '"': buf_ += "\\\""; break;
        case '\\': buf_ += "\\\\"; break;
        case '\n': buf_ += "\\n"; break;
        case '\r': buf_ += "\\r"; break;
        case '\t': buf_ += "\\t"; break;
        default:
          if (static_cast<unsigned char>(ch) < 0x20) {
            char tmp[8];
            std::snprintf(tmp, sizeof(tmp), "\\u%04x",
                          static_cast<unsigned>(ch));
            buf_ += tmp;
          } else {
            buf_ += ch;
          }
      }
    }
    buf_ += '"';
  }

  std::string buf_;
  std::vector<bool> stack_;
  bool pending_value_ = false;
};

}  // namespace eqcon_cli
