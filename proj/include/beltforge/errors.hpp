#pragma once

#include <stdexcept>
#include <string>

namespace beltforge {

// Process exit codes used by the CLI, one per error class.
enum class ErrorCode : int {
  kOk = 0,
  kGeneric = 1,
  kConfig = 2,
  kStageDependency = 3,
  kFormat = 4,
  kInfeasible = 5,
  kTrainingDiverged = 6,
  kNonConvergence = 7,
  kDomain = 8,
  kInsufficientData = 9,
  kRollout = 10,
  kIo = 11,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCode::kDomain, what) {}
};

class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& what)
      : Error(ErrorCode::kInsufficientData, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCode::kConfig, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorCode::kFormat, what) {}
};

class StageDependencyError : public Error {
 public:
  explicit StageDependencyError(const std::string& what)
      : Error(ErrorCode::kStageDependency, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::kIo, what) {}
};

class RolloutError : public Error {
 public:
  RolloutError(const std::string& what, int step) : Error(ErrorCode::kRollout, what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

}  // namespace beltforge
