#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bimark {

// Shapes disagree (vocab sizes, flip counts, message lengths).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// An argument lies outside the domain of the operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A statistic is undefined for the supplied counts (e.g. z with N = 0).
class UndefinedStatistic : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A collaborator broke its contract (e.g. a language model returned an
// invalid distribution) or an internal invariant failed.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed input file or document. `line` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line == 0 ? what
                                     : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace bimark
