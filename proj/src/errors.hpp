#pragma once

#include <stdexcept>
#include <string>

namespace eqcon {

// Failure categories. They map one-to-one onto the C API status codes and,
// through the CLI, onto process exit codes (input: 2, numerical: 3).
enum class ErrorKind {
  invalid_input,
  numerical,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_invalid(const std::string& msg) {
  throw Error(ErrorKind::invalid_input, msg);
}

[[noreturn]] inline void throw_numerical(const std::string& msg) {
  throw Error(ErrorKind::numerical, msg);
}

}  // namespace eqcon
