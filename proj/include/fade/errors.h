#ifndef FADE_ERRORS_H_
#define FADE_ERRORS_H_

#include <stdexcept>
#include <string>

namespace fade {

// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  kInvalidInput,   // bad data or arguments
  kConfig,         // run configuration rejected before compute
  kStageMismatch,  // a pipeline stage is missing an upstream artifact
  kInfeasible,     // constrained problem has no feasible point
  kNumeric,        // conditioning or convergence failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by the unfair-min solver when even the least-squares fit exceeds
// the risk budget. Carries the smallest achievable risk so callers can
// re-target.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& message, double min_achievable_risk)
      : Error(ErrorKind::kInfeasible, message),
        min_achievable_risk_(min_achievable_risk) {}

  double min_achievable_risk() const { return min_achievable_risk_; }

 private:
  double min_achievable_risk_;
};

inline Error InvalidInput(const std::string& message) {
  return Error(ErrorKind::kInvalidInput, message);
}
inline Error NumericFailure(const std::string& message) {
  return Error(ErrorKind::kNumeric, message);
}
inline Error ConfigError(const std::string& message) {
  return Error(ErrorKind::kConfig, message);
}

}  // namespace fade

#endif  // FADE_ERRORS_H_
