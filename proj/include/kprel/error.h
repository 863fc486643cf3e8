#ifndef KPREL_ERROR_H_
#define KPREL_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace kprel {

enum class ErrorCode {
  kDomain,         // mathematically undefined input (0/0 and the like)
  kInvalidInput,   // caller handed us something that violates a precondition
  kUntrainable,    // dataset cannot produce a classifier
  kNumerical,      // non-finite value during optimization
  kCorruptPayload, // unparsable model / snapshot / record
  kVersionMismatch,
  kSchemaMismatch,
  kBackend,        // judge backend transport failure
  kIo,
};

std::string_view error_code_name(ErrorCode code);

// Every failure raised by this library is a kprel::Error. The CLI maps it to a
// one-line diagnostic and a nonzero exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kprel

#endif  // KPREL_ERROR_H_
