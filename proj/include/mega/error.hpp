#pragma once

#include <stdexcept>
#include <string>

namespace mega {

// Base for every error the library raises. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input data. Carries the file and 1-based line when known.
class DataError : public Error {
 public:
  DataError(const std::string& msg, std::string file = {}, std::size_t line = 0)
      : Error(format(msg, file, line)), file_(std::move(file)), line_(line) {}

  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }

 private:
  static std::string format(const std::string& msg, const std::string& file, std::size_t line) {
    if (file.empty()) return msg;
    if (line == 0) return file + ": " + msg;
    return file + ":" + std::to_string(line) + ": " + msg;
  }

  std::string file_;
  std::size_t line_;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mega
