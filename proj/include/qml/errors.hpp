#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace qml {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (p < 1, |xi2| > 1 on the circle, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Inputs are valid but the requested computation would be under-resolved or too expensive.
class Refused : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

using Warnings = std::vector<std::string>;

inline void warn(Warnings* sink, std::string message) {
  if (sink != nullptr) sink->push_back(std::move(message));
}

}  // namespace qml
