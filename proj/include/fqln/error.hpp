#pragma once

#include <stdexcept>
#include <string>

namespace fqln {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller-supplied value is outside its documented domain.
class InvalidParameter : public Error {
public:
  using Error::Error;
};

// Tensor or batch shapes do not line up.
class ShapeError : public Error {
public:
  using Error::Error;
};

// A byte stream does not match the format it claims to be.
class FormatError : public Error {
public:
  using Error::Error;
};

// Two inputs that must agree (counts, dims, label files) do not.
class ConsistencyError : public Error {
public:
  using Error::Error;
};

// A probability vector fails the simplex check.
class InvalidDistribution : public Error {
public:
  using Error::Error;
};

// A ratio whose denominator vanished (identical clean/corrupted pair).
class UndefinedRatio : public Error {
public:
  using Error::Error;
};

// Loss or gradients turned non-finite during optimisation.
class TrainingDiverged : public Error {
public:
  using Error::Error;
};

// mCE normalisation against a reference with zero error.
class NormalizationError : public Error {
public:
  using Error::Error;
};

// Bad command line or config file input; maps to exit code 2.
class UsageError : public Error {
public:
  using Error::Error;
};

}  // namespace fqln
