#pragma once

#include <limits>
#include <stdexcept>
#include <string>

namespace sugkit {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

// Malformed caller input (bad token id, unreadable file, bad record).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parameter combination that violates a module invariant.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Day-ordered ingestion received a day that is not strictly newer.
class OrderingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A runtime invariant check failed.
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sugkit
