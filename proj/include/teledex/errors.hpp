#pragma once

#include <stdexcept>
#include <string>

namespace teledex {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document (JSON, JSON-lines, binary header).
class ParseError : public Error {
public:
  using Error::Error;
};

/// Structurally valid input that violates a domain invariant.
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Vector or matrix sizes that do not agree with the model.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// A referenced keypoint, finger, source or file is absent.
class MissingError : public Error {
public:
  using Error::Error;
};

/// Calibration data cannot produce a finite profile.
class DegenerateCalibrationError : public Error {
public:
  using Error::Error;
};

/// NaN/Inf reached a cost evaluation.
class NonFiniteError : public Error {
public:
  using Error::Error;
};

/// Stored bytes do not match their recorded checksum or canonical form.
class IntegrityError : public Error {
public:
  using Error::Error;
};

class VersionError : public Error {
public:
  using Error::Error;
};

class IoError : public Error {
public:
  using Error::Error;
};

}  // namespace teledex
