#pragma once

#include <stdexcept>
#include <string>

namespace vmudiff {

/** Broad failure category, used to pick a process exit code at the CLI layer. */
enum class ErrorKind {
  Usage,            // bad arguments or config values
  Io,               // filesystem trouble: missing file, short write
  BadMagic,         // stream does not start with the expected tag
  VersionMismatch,  // recognized container, unsupported version
  Truncated,        // payload shorter than the header promises
  DimOverflow,      // declared dims exceed the configured ceiling
  ShapeMismatch,    // tensors or checkpoints disagree on shape
  NonFinite,        // NaN or inf where a finite value is required
  Numeric,          // optimization or sampling failure
};

const char* to_string(ErrorKind kind);

/** Single exception type; kind() tells callers how to react. */
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg);
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& msg);

/** Throws Error(kind, msg) unless cond holds. */
void require(bool cond, ErrorKind kind, const std::string& msg);

}  // namespace vmudiff
