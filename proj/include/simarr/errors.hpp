#pragma once

#include <stdexcept>
#include <string>

namespace simarr {

// Every failure the library reports derives from Error so callers can catch
// one type at the harness boundary.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BoundsViolation : public Error { using Error::Error; };
class EmptyTrajectory : public Error { using Error::Error; };
class OutOfWorkspace : public Error { using Error::Error; };
class NoPath : public Error { using Error::Error; };
class Infeasible : public Error { using Error::Error; };
class Timeout : public Error { using Error::Error; };
class PreconditionViolation : public Error { using Error::Error; };
class EmptySet : public Error { using Error::Error; };
class SpecError : public Error { using Error::Error; };
class DimensionMismatch : public Error { using Error::Error; };
class WindowFailed : public Error { using Error::Error; };
class SpliceMismatch : public Error { using Error::Error; };
class GenerationTimeout : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };

class ParseError : public Error {
 public:
  ParseError(const std::string& msg, int line = 0, std::string field = {})
      : Error(msg), line_(line), field_(std::move(field)) {}
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

class ValidationError : public Error { using Error::Error; };

}  // namespace simarr
