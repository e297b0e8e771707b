#pragma once

#include <stdexcept>
#include <string>

namespace pandas {

enum class ErrorKind { Io, Parse, Mesh, Shape, Config, Solver, Training };

inline const char* error_prefix(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "io error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Mesh: return "mesh error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Solver: return "solver error";
    case ErrorKind::Training: return "training error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pandas
