#pragma once

#include <stdexcept>
#include <string>

namespace conetrace {

// Exit categories used by the CLI: 2 = validation, 3 = numerical failure,
// 4 = regime refusal (the request is well-formed but mathematically refused).
enum class ErrorKind { Validation = 2, Numerical = 3, Refusal = 4 };

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, std::string code, const std::string& what)
      : std::runtime_error(what), kind_(kind), code_(std::move(code)) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }
  const std::string& code() const { return code_; }

private:
  ErrorKind kind_;
  std::string code_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::Validation, "validation", what) {}
};

struct InvalidPolygon : Error {
  explicit InvalidPolygon(const std::string& what)
      : Error(ErrorKind::Validation, "invalid_polygon", what) {}
};

struct SingularOperator : Error {
  explicit SingularOperator(const std::string& what)
      : Error(ErrorKind::Numerical, "singular_operator", what) {}
};

struct NoConvergence : Error {
  explicit NoConvergence(const std::string& what)
      : Error(ErrorKind::Numerical, "no_convergence", what) {}
};

struct LineSearchStall : Error {
  explicit LineSearchStall(const std::string& what)
      : Error(ErrorKind::Numerical, "line_search_stall", what) {}
};

struct ScheduleExhausted : Error {
  explicit ScheduleExhausted(const std::string& what)
      : Error(ErrorKind::Numerical, "schedule_exhausted", what) {}
};

struct WindowTooNoisy : Error {
  explicit WindowTooNoisy(const std::string& what)
      : Error(ErrorKind::Numerical, "window_too_noisy", what) {}
};

struct SandwichViolation : Error {
  explicit SandwichViolation(const std::string& what)
      : Error(ErrorKind::Numerical, "sandwich_violation", what) {}
};

struct Unclassifiable : Error {
  explicit Unclassifiable(const std::string& what)
      : Error(ErrorKind::Numerical, "unclassifiable", what) {}
};

// Consistency failures between two supposedly equivalent computations.
struct ConsistencyError : Error {
  explicit ConsistencyError(const std::string& what)
      : Error(ErrorKind::Numerical, "consistency", what) {}
};

struct SupercriticalNoSolution : Error {
  explicit SupercriticalNoSolution(const std::string& what)
      : Error(ErrorKind::Refusal, "supercritical_no_solution", what) {}
};

struct SupercriticalRefused : Error {
  explicit SupercriticalRefused(const std::string& what)
      : Error(ErrorKind::Refusal, "supercritical_refused", what) {}
};

struct AmbiguousNearCritical : Error {
  explicit AmbiguousNearCritical(const std::string& what)
      : Error(ErrorKind::Refusal, "ambiguous_near_critical", what) {}
};

struct InadmissibleDatum : Error {
  explicit InadmissibleDatum(const std::string& what)
      : Error(ErrorKind::Refusal, "inadmissible_datum", what) {}
};

} // namespace conetrace
