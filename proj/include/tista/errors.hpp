#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tista {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A scalar parameter outside its admissible domain (negative threshold,
// non-positive variance, probability outside (0, 1], ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

class RankError : public Error {
 public:
  RankError(const std::string& what, double singular_value)
      : Error(what), singular_value_(singular_value) {}
  double singular_value() const { return singular_value_; }

 private:
  double singular_value_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Raised by the iterative engines when an iterate blows up.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : Error(what), iteration_(iteration) {}
  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class TrainingDivergenceError : public Error {
 public:
  TrainingDivergenceError(const std::string& what, std::size_t generation)
      : Error(what), generation_(generation) {}
  std::size_t generation() const { return generation_; }

 private:
  std::size_t generation_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace tista
