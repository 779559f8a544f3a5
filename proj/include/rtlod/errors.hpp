#pragma once

#include <stdexcept>
#include <string>

namespace rtlod {

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input file; `index` is the offending entry (or -1).
class DataFormatError : public std::runtime_error {
 public:
  DataFormatError(const std::string& what, long index = -1)
      : std::runtime_error(what), index_(index) {}
  long index() const { return index_; }

 private:
  long index_;
};

class DataMissingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedFeature : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class CompatibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A local problem that cannot fail for valid input did fail.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace rtlod
