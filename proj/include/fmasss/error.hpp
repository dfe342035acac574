#pragma once

#include <stdexcept>
#include <string>

namespace fmasss {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define FMASSS_DEFINE_ERROR(Name, tag)                                  \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(tag, what) {}        \
  };

FMASSS_DEFINE_ERROR(InputError, "input_error")
FMASSS_DEFINE_ERROR(ConfigError, "config_error")
FMASSS_DEFINE_ERROR(DomainError, "domain_error")
FMASSS_DEFINE_ERROR(SmoothingError, "smoothing_error")
FMASSS_DEFINE_ERROR(DecompositionError, "decomposition_error")
FMASSS_DEFINE_ERROR(FitError, "fit_error")
FMASSS_DEFINE_ERROR(SelectionError, "selection_error")
FMASSS_DEFINE_ERROR(InvalidWindowError, "invalid_window_error")
FMASSS_DEFINE_ERROR(ScanError, "scan_error")
FMASSS_DEFINE_ERROR(IngestionError, "ingestion_error")
FMASSS_DEFINE_ERROR(IndexError, "index_error")

#undef FMASSS_DEFINE_ERROR

}  // namespace fmasss
