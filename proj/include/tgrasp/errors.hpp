#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tgrasp {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error("invalid " + field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class SequencingError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class EpisodeOverError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient; `index` is the epoch or optimizer step.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::int64_t index)
      : Error(what + " (at " + std::to_string(index) + ")"), index_(index) {}
  std::int64_t index() const noexcept { return index_; }

 private:
  std::int64_t index_;
};

class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::size_t component)
      : Error(what + " (component " + std::to_string(component) + ")"),
        component_(component) {}
  std::size_t component() const noexcept { return component_; }

 private:
  std::size_t component_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace tgrasp
