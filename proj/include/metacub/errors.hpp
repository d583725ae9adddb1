#pragma once

#include <stdexcept>
#include <string>

namespace metacub {

// Error taxonomy shared by every module. All derive from std::runtime_error so
// callers that do not care about the category can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : Error { using Error::Error; };
struct ParameterError : Error { using Error::Error; };
struct StateError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct ConstraintViolation : Error { using Error::Error; };
struct FitError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct MappingError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };

}  // namespace metacub
