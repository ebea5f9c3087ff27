#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace relgt {

inline constexpr const char* kToolVersion = "0.1.0";

// Timestamps are seconds since epoch; kNoTimestamp marks static rows
// (dimension tables without an event time).
using Timestamp = int64_t;
inline constexpr Timestamp kNoTimestamp = INT64_MIN;

using NodeId = int64_t;

// Domain errors carry a stable kind string so the CLI can emit one
// machine-readable line per failure.
class DomainError : public std::runtime_error {
 public:
  DomainError(std::string kind, const std::string& msg)
      : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

struct ParseError : DomainError {
  explicit ParseError(const std::string& m) : DomainError("ParseError", m) {}
};
struct SchemaError : DomainError {
  explicit SchemaError(const std::string& m) : DomainError("SchemaError", m) {}
};
struct IoError : DomainError {
  explicit IoError(const std::string& m) : DomainError("IoError", m) {}
};
struct IntegrityError : DomainError {
  explicit IntegrityError(const std::string& m) : DomainError("IntegrityError", m) {}
};
struct DuplicateKeyError : DomainError {
  explicit DuplicateKeyError(const std::string& m) : DomainError("DuplicateKeyError", m) {}
};
struct NonScalarLoss : DomainError {
  explicit NonScalarLoss(const std::string& m) : DomainError("NonScalarLoss", m) {}
};
struct NonFiniteLoss : DomainError {
  explicit NonFiniteLoss(const std::string& m) : DomainError("NonFiniteLoss", m) {}
};
struct DegenerateLabels : DomainError {
  explicit DegenerateLabels(const std::string& m) : DomainError("DegenerateLabels", m) {}
};
struct EmptyUniverse : DomainError {
  explicit EmptyUniverse(const std::string& m) : DomainError("EmptyUniverse", m) {}
};

// Contract violations (caller bugs, not data problems).
[[noreturn]] inline void contract_fail(const char* file, int line, const std::string& what) {
  std::ostringstream os;
  os << "contract violation at " << file << ":" << line << ": " << what;
  throw std::logic_error(os.str());
}

#define RELGT_CHECK(cond, msg)                                   \
  do {                                                           \
    if (!(cond)) ::relgt::contract_fail(__FILE__, __LINE__, (msg)); \
  } while (0)

}  // namespace relgt
