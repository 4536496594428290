#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rhythmiq {

enum class ErrorKind {
  Io,
  Format,
  EmptyInput,
  Validation,
  Reference,
  InsufficientData,
  NoTempo,
  Capacity,
  Parse,
  Decomposition,
  NotFound,
  Unsupported,
  Shape,
  UndefinedReference,
  Config,
  Pairing,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library. The kind is stable and is what the
/// CLI maps onto exit codes; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace rhythmiq
