#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cafl {

// Base class for everything the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input document. `line` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " at line " + std::to_string(line) : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct FieldIssue {
  std::string field;
  std::string message;
};

// Configuration rejected against a terrain. Carries one entry per offending field.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<FieldIssue> issues)
      : Error(summarize(issues)), issues_(std::move(issues)) {}
  const std::vector<FieldIssue>& issues() const noexcept { return issues_; }

 private:
  static std::string summarize(const std::vector<FieldIssue>& issues) {
    std::string out = "invalid configuration";
    for (const auto& i : issues) out += "; " + i.field + ": " + i.message;
    return out;
  }
  std::vector<FieldIssue> issues_;
};

// Numerical blow-up detected during a step.
class InstabilityError : public Error {
 public:
  InstabilityError(const std::string& reason, std::size_t step, std::size_t row, std::size_t col)
      : Error(reason + " at step " + std::to_string(step) + ", cell (" + std::to_string(row) + ", " +
              std::to_string(col) + ")"),
        step_(step), row_(row), col_(col) {}
  std::size_t step() const noexcept { return step_; }
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t step_, row_, col_;
};

}  // namespace cafl
