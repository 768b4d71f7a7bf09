#include "vmudiff/error.hpp"

namespace vmudiff {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Io: return "io";
    case ErrorKind::BadMagic: return "bad-magic";
    case ErrorKind::VersionMismatch: return "version-mismatch";
    case ErrorKind::Truncated: return "truncated";
    case ErrorKind::DimOverflow: return "dim-overflow";
    case ErrorKind::ShapeMismatch: return "shape-mismatch";
    case ErrorKind::NonFinite: return "non-finite";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& msg)
    : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}

void raise(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) raise(kind, msg);
}

}  // namespace vmudiff
