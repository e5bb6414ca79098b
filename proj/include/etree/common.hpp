#ifndef ETREE_COMMON_HPP_
#define ETREE_COMMON_HPP_

#include <stdexcept>
#include <string>

namespace etree {

// Contract violation: caller passed arguments that break a documented
// precondition (dimension mismatch, out-of-range index, bad flag value).
struct ContractError : std::invalid_argument {
  explicit ContractError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numeric failure at runtime: non-finite values entering solver state,
// failed factorization, diverging objective.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Data/parse failure: malformed files, duplicate entries, bad indices.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace etree

#endif  // ETREE_COMMON_HPP_
