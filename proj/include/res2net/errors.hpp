#pragma once

#include <stdexcept>
#include <string>

namespace res2net {

// Base class for everything this library throws.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& msg) : Error(msg) {}
};

struct NonDivisibleChannels : Error {
  explicit NonDivisibleChannels(const std::string& msg) : Error(msg) {}
};

struct EmptySpatial : Error {
  explicit EmptySpatial(const std::string& msg) : Error(msg) {}
};

struct NotScalarLoss : Error {
  explicit NotScalarLoss(const std::string& msg) : Error(msg) {}
};

struct InvalidTemplate : Error {
  explicit InvalidTemplate(const std::string& msg) : Error(msg) {}
};

struct EmptyRange : Error {
  explicit EmptyRange(const std::string& msg) : Error(msg) {}
};

struct InvalidDimension : Error {
  explicit InvalidDimension(const std::string& msg) : Error(msg) {}
};

struct PreconditionViolation : Error {
  explicit PreconditionViolation(const std::string& msg) : Error(msg) {}
};

struct BadRecordLength : Error {
  explicit BadRecordLength(const std::string& msg) : Error(msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

struct EmptyDataset : Error {
  explicit EmptyDataset(const std::string& msg) : Error(msg) {}
};

struct UnknownLayer : Error {
  explicit UnknownLayer(const std::string& msg) : Error(msg) {}
};

struct BadMagic : Error {
  explicit BadMagic(const std::string& msg) : Error(msg) {}
};

struct UnsupportedVersion : Error {
  explicit UnsupportedVersion(const std::string& msg) : Error(msg) {}
};

struct TruncatedFile : Error {
  explicit TruncatedFile(const std::string& msg) : Error(msg) {}
};

}  // namespace res2net
