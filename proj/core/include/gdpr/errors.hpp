#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gdpr {

// Every failure raised by the library derives from Error. code() is a stable
// machine-readable identifier used by the CLI error line and the HTTP API.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define GDPR_DEFINE_ERROR(Name, code_string)                      \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& message)                     \
        : Error(code_string, message) {}                          \
  }

GDPR_DEFINE_ERROR(ShapeError, "shape_error");
GDPR_DEFINE_ERROR(IndexError, "index_error");
GDPR_DEFINE_ERROR(StateError, "state_error");
GDPR_DEFINE_ERROR(FormatError, "format_error");
GDPR_DEFINE_ERROR(InvalidLabel, "invalid_label");
GDPR_DEFINE_ERROR(EmptyCorpus, "empty_corpus");
GDPR_DEFINE_ERROR(EmptyVocab, "empty_vocab");
GDPR_DEFINE_ERROR(EmptyDataset, "empty_dataset");
GDPR_DEFINE_ERROR(ModelMismatch, "model_mismatch");
GDPR_DEFINE_ERROR(CannotSplit, "cannot_split");
GDPR_DEFINE_ERROR(NotFound, "not_found");
GDPR_DEFINE_ERROR(ArityError, "arity_error");
GDPR_DEFINE_ERROR(EmptyPool, "empty_pool");
GDPR_DEFINE_ERROR(EmptyPolicy, "empty_policy");
GDPR_DEFINE_ERROR(IterationStalled, "iteration_stalled");
GDPR_DEFINE_ERROR(IoError, "io_error");
GDPR_DEFINE_ERROR(ConfigError, "config_error");

#undef GDPR_DEFINE_ERROR

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error("parse_error", "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  // 1-based line number of the offending record.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class FetchError : public Error {
 public:
  // status is the HTTP status code, or 0 when no response was received.
  FetchError(int status, const std::string& message)
      : Error("fetch_error", message), status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace gdpr
