#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lsdm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data or configuration violates a documented contract.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Array or tensor shapes disagree with the configured model.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or serialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Persisted artifact written by an incompatible format version.
class VersionError : public IoError {
 public:
  using IoError::IoError;
};

/// Warnings are routed through a replaceable sink so tests can observe them.
using WarningSink = std::function<void(std::string_view)>;

/// Installs a sink and returns the previous one. An empty sink restores stderr.
WarningSink set_warning_sink(WarningSink sink);

void warn(std::string_view message);

}  // namespace lsdm
