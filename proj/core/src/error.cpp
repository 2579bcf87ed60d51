#include "fpc/error.hpp"

namespace fpc {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
      return "config_error";
    case ErrorKind::kEmptyResult:
      return "empty_result";
    case ErrorKind::kContract:
      return "contract_violation";
  }
  return "unknown";
}

}  // namespace fpc
