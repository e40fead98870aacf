#pragma once

#include <stdexcept>
#include <string>

namespace umner {

// Error taxonomy shared by the library and the C API status codes.
enum class ErrorKind {
  Io,
  Format,
  Shape,
  Config,
  Contract,
  Domain,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error io_error(const std::string& msg) { return Error(ErrorKind::Io, msg); }
inline Error format_error(const std::string& msg) { return Error(ErrorKind::Format, msg); }
inline Error shape_error(const std::string& msg) { return Error(ErrorKind::Shape, msg); }
inline Error config_error(const std::string& msg) { return Error(ErrorKind::Config, msg); }
inline Error contract_error(const std::string& msg) { return Error(ErrorKind::Contract, msg); }
inline Error domain_error(const std::string& msg) { return Error(ErrorKind::Domain, msg); }

}  // namespace umner
