#pragma once

#include <stdexcept>
#include <string>

namespace sical {

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegeneracyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnderConstrainedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when a spline is queried outside its valid interval.
struct OutOfSupportError : DomainError {
  OutOfSupportError(double t, double begin, double end)
      : DomainError("time " + std::to_string(t) + " outside spline support [" +
                    std::to_string(begin) + ", " + std::to_string(end) + ")"),
        query(t),
        support_begin(begin),
        support_end(end) {}
  double query;
  double support_begin;
  double support_end;
};

/// Failure of an initialization stage, tagged with the stage name.
struct StageError : std::runtime_error {
  StageError(const std::string &stage_tag, const std::string &what)
      : std::runtime_error("[" + stage_tag + "] " + what), stage(stage_tag) {}
  std::string stage;
};

}  // namespace sical
