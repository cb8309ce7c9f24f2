#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nlsql {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IntrospectionError : public Error {
 public:
  using Error::Error;
};

class EmbeddingError : public Error {
 public:
  using Error::Error;
};

class IngestError : public Error {
 public:
  IngestError(std::string record_id, const std::string& what)
      : Error(what), record_id_(std::move(record_id)) {}
  const std::string& record_id() const noexcept { return record_id_; }

 private:
  std::string record_id_;
};

class PromptBuildError : public Error {
 public:
  using Error::Error;
};

// Transport or provider failure; callers may retry.
class GatewayError : public Error {
 public:
  using Error::Error;
};

class CassetteMissError : public GatewayError {
 public:
  CassetteMissError(std::string prompt_hash, const std::string& model)
      : GatewayError("cassette miss for prompt " + prompt_hash + " (model " + model + ")"),
        prompt_hash_(std::move(prompt_hash)) {}
  const std::string& prompt_hash() const noexcept { return prompt_hash_; }

 private:
  std::string prompt_hash_;
};

// Misuse of test fixtures (e.g. a scripted backend ran out of responses).
class HarnessError : public Error {
 public:
  using Error::Error;
};

class ScriptExhaustedError : public HarnessError {
 public:
  using HarnessError::HarnessError;
};

// The audit trail could not be written. Never swallowed.
class AuditError : public Error {
 public:
  using Error::Error;
};

class ExtractionError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t offset, std::size_t line, std::size_t column)
      : Error(message + " at line " + std::to_string(line) + ", column " + std::to_string(column)),
        message_(message),
        offset_(offset),
        line_(line),
        column_(column) {}

  const std::string& message() const noexcept { return message_; }
  std::size_t offset() const noexcept { return offset_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::string message_;
  std::size_t offset_;
  std::size_t line_;
  std::size_t column_;
};

class TranspileError : public Error {
 public:
  using Error::Error;
};

// A source-dialect construct with no known target-dialect mapping.
class UnsupportedConstructError : public TranspileError {
 public:
  explicit UnsupportedConstructError(std::string construct)
      : TranspileError("unsupported construct: " + construct), construct_(std::move(construct)) {}
  const std::string& construct() const noexcept { return construct_; }

 private:
  std::string construct_;
};

class DatabaseError : public Error {
 public:
  using Error::Error;
};

// Engine rejected or failed the statement. what() is the engine message.
class ExecutionError : public Error {
 public:
  using Error::Error;
};

class QueryTimeoutError : public ExecutionError {
 public:
  using ExecutionError::ExecutionError;
};

// Statement is not a single read-only query. Never retried.
class PolicyError : public ExecutionError {
 public:
  using ExecutionError::ExecutionError;
};

class VizParseError : public Error {
 public:
  using Error::Error;
};

class VizValidationError : public Error {
 public:
  using Error::Error;
};

class RequestError : public Error {
 public:
  RequestError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace nlsql
