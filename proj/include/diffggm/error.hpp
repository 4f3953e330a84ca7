#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace diffggm {

/// Coarse error category. The CLI maps these onto process exit codes.
enum class ErrorKind { Usage, Data, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConstantColumn : public Error {
 public:
  explicit ConstantColumn(std::ptrdiff_t column)
      : Error(ErrorKind::Data, "column " + std::to_string(column) + " has zero variance"),
        column_(column) {}
  std::ptrdiff_t column() const noexcept { return column_; }

 private:
  std::ptrdiff_t column_;
};

class NonFiniteInput : public Error {
 public:
  explicit NonFiniteInput(const std::string& where)
      : Error(ErrorKind::Data, "non-finite value in " + where) {}
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class NonPsdCost : public Error {
 public:
  explicit NonPsdCost(double min_eig)
      : Error(ErrorKind::Data, "quadratic cost is not positive semidefinite (min eigenvalue " +
                                   std::to_string(min_eig) + ")") {}
};

class NonPositiveVariance : public Error {
 public:
  explicit NonPositiveVariance(std::ptrdiff_t index)
      : Error(ErrorKind::Numerical,
              "difference variance is not positive at coordinate " + std::to_string(index)),
        index_(index) {}
  std::ptrdiff_t index() const noexcept { return index_; }

 private:
  std::ptrdiff_t index_;
};

class DegenerateResidual : public Error {
 public:
  DegenerateResidual(std::ptrdiff_t n, std::ptrdiff_t support)
      : Error(ErrorKind::Numerical, "residual degrees of freedom exhausted: n=" + std::to_string(n) +
                                        ", support=" + std::to_string(support)) {}
};

class InfeasibleTargets : public Error {
 public:
  explicit InfeasibleTargets(const std::string& what) : Error(ErrorKind::Usage, what) {}
};

class EmptyInput : public Error {
 public:
  explicit EmptyInput(const std::string& what) : Error(ErrorKind::Data, what) {}
};

/// A nodewise pipeline step failed; carries the node so callers can report it.
class NodeFailure : public Error {
 public:
  NodeFailure(std::ptrdiff_t node, const std::string& what)
      : Error(ErrorKind::Numerical, "node " + std::to_string(node) + ": " + what), node_(node) {}
  std::ptrdiff_t node() const noexcept { return node_; }

 private:
  std::ptrdiff_t node_;
};

}  // namespace diffggm
