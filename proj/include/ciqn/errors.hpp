#pragma once

#include <stdexcept>
#include <string>

namespace ciqn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Collective misuse: mismatched call sequence, or a rank leaving while the
// others still wait in a collective.
class CollectiveError : public Error {
 public:
  using Error::Error;
};

class LayoutError : public Error {
 public:
  using Error::Error;
};

// Upper-triangular factor with a (numerically) zero diagonal entry.
class SingularUError : public Error {
 public:
  SingularUError() : Error("singular U") {}
};

// Every column of the increment matrix was filtered out.
class EmptySecantSpaceError : public Error {
 public:
  EmptySecantSpaceError() : Error("empty secant space") {}
};

class NoOracleError : public Error {
 public:
  using Error::Error;
};

}  // namespace ciqn
