#pragma once

#include <stdexcept>
#include <string>

namespace ccsnet {

/// Base class for every error raised by the library. The category is a short
/// machine-parsable token that the CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

#define CCSNET_DEFINE_ERROR(Name, token)                                   \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(token, what) {}         \
  };

CCSNET_DEFINE_ERROR(ArgumentError, "argument")
CCSNET_DEFINE_ERROR(ConfigError, "config")
CCSNET_DEFINE_ERROR(DimensionError, "dimension")
CCSNET_DEFINE_ERROR(GeometryError, "geometry")
CCSNET_DEFINE_ERROR(RegistryError, "registry")
CCSNET_DEFINE_ERROR(SolverError, "solver")
CCSNET_DEFINE_ERROR(DegenerateDataError, "degenerate-data")
CCSNET_DEFINE_ERROR(SeriesTooShortError, "series-too-short")
CCSNET_DEFINE_ERROR(FormatError, "format")
CCSNET_DEFINE_ERROR(DatasetError, "dataset")
CCSNET_DEFINE_ERROR(DependencyError, "dependency")
CCSNET_DEFINE_ERROR(ContractError, "contract")
CCSNET_DEFINE_ERROR(PathError, "path")

#undef CCSNET_DEFINE_ERROR

}  // namespace ccsnet
