#pragma once

#include <stdexcept>
#include <string>

namespace voxshap {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: malformed files, inconsistent grids, out-of-range parameters.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// External predictor launch, framing, or handshake failure.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Solver failures (rank deficiency, non-finite values).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Rethrows the in-flight exception with `prefix` prepended to its message,
// keeping the library error category. Must be called from a catch block.
[[noreturn]] inline void rethrow_with_context(const std::string& prefix) {
  try {
    throw;
  } catch (const ProtocolError& e) {
    throw ProtocolError(prefix + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace voxshap
