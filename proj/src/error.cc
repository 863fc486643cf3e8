#include "kprel/error.h"

namespace kprel {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kInvalidInput: return "invalid_input";
    case ErrorCode::kUntrainable: return "untrainable";
    case ErrorCode::kNumerical: return "numerical";
    case ErrorCode::kCorruptPayload: return "corrupt_payload";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kSchemaMismatch: return "schema_mismatch";
    case ErrorCode::kBackend: return "backend";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace kprel
