#pragma once

#include <stdexcept>
#include <string>

namespace treebvm {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct NonSquareGrid : Error {
  using Error::Error;
};
struct UnknownTruthFamily : Error {
  using Error::Error;
};
struct EmptyCell : Error {
  using Error::Error;
};
struct TooShallowData : Error {
  using Error::Error;
};
struct BadDimension : Error {
  using Error::Error;
};
struct EnumerationCapExceeded : Error {
  using Error::Error;
};
struct DimensionMismatch : Error {
  using Error::Error;
};
struct LengthMismatch : Error {
  using Error::Error;
};
struct MissingTruth : Error {
  using Error::Error;
};
struct NumericalFailure : Error {
  using Error::Error;
};
struct ConfigInvalid : Error {
  using Error::Error;
};
struct TooFewDraws : Error {
  using Error::Error;
};
struct WrongWeight : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

}  // namespace treebvm
