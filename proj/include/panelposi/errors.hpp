#pragma once

#include <stdexcept>
#include <string>

namespace panelposi {

// Failure classes map one-to-one onto CLI exit codes.
enum class ErrorClass { Input, Numerical, Config };

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, std::string kind, const std::string& message)
      : std::runtime_error(message), class_(cls), kind_(std::move(kind)) {}

  ErrorClass error_class() const noexcept { return class_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  ErrorClass class_;
  std::string kind_;
};

#define PANELPOSI_DEFINE_ERROR(Name, Class)                              \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& message)                            \
        : Error(ErrorClass::Class, #Name, message) {}                    \
  };

PANELPOSI_DEFINE_ERROR(SingularDesign, Numerical)
PANELPOSI_DEFINE_ERROR(NoConvergence, Numerical)
PANELPOSI_DEFINE_ERROR(SelectionInfeasible, Numerical)
PANELPOSI_DEFINE_ERROR(InconsistentZeroRow, Numerical)
PANELPOSI_DEFINE_ERROR(EmptyInterval, Numerical)
PANELPOSI_DEFINE_ERROR(OutOfSupport, Numerical)
PANELPOSI_DEFINE_ERROR(InvalidOrder, Numerical)
PANELPOSI_DEFINE_ERROR(DegenerateDof, Numerical)
PANELPOSI_DEFINE_ERROR(EmptyActiveSet, Numerical)
PANELPOSI_DEFINE_ERROR(AllInfinite, Config)
PANELPOSI_DEFINE_ERROR(EmptyFamily, Input)
PANELPOSI_DEFINE_ERROR(DuplicateEntry, Input)
PANELPOSI_DEFINE_ERROR(ShapeMismatch, Input)
PANELPOSI_DEFINE_ERROR(ParseError, Input)
PANELPOSI_DEFINE_ERROR(ConfigError, Config)

#undef PANELPOSI_DEFINE_ERROR

}  // namespace panelposi
