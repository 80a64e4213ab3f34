#pragma once

#include <stdexcept>
#include <string>

namespace lung {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

/// The binarized nodule has no on-voxels.
class EmptyNodule : public Error {
 public:
  using Error::Error;
};

/// The binarized nodule has more than one 6-connected component.
class MultiComponent : public Error {
 public:
  using Error::Error;
};

class EmptySet : public Error {
 public:
  using Error::Error;
};

/// Score is undefined when every generated image was accepted.
class DegenerateAcceptance : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (bad magic, truncated payload, unknown key...).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace lung
