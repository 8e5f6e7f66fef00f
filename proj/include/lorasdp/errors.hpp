#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lorasdp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatches and other caller bugs.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnsupportedFeature : public Error {
 public:
  using Error::Error;
};

class EmptyProblem : public Error {
 public:
  using Error::Error;
};

// Raised by CG when <p, A p> <= 0; the operator is supposed to be SPD.
class SpdViolation : public Error {
 public:
  using Error::Error;
};

// Non-finite Lagrangian, gradient or CG iterate.
class Diverged : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const char* what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace lorasdp
