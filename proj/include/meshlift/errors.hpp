#pragma once

#include <stdexcept>
#include <string>

namespace meshlift {

/// Base class of every error the engine raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed mesh connectivity (out-of-range or repeated indices).
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an operation's precondition (mismatched rigs, resolutions, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Unreadable or malformed input files.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Reconstruction targets contain no foreground.
class EmptyTargetError : public Error {
 public:
  using Error::Error;
};

}  // namespace meshlift
