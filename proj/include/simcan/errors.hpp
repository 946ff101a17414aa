#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace simcan {

enum class Err {
  KEY_LEN_ERROR,
  INVALID_PEER_KEY,
  ALGO_MISMATCH,
  FRAME_TOO_LONG,
  FRAME_TOO_SHORT,
  MALFORMED_FRAME,
  DECRYPT_ERROR,
  ZERO_WINDOW,
  CAPACITY_ERROR,
  NO_SUCH_LEVEL,
  DOUBLE_DEPRECATE,
  PRIVILEGE_VIOLATION,
  MODE_UNAVAILABLE,
  EMPTY_NETWORK,
  DUPLICATE_NODE,
  NOT_PROVISIONED,
  NO_MEMBERS,
  NO_LOG,
  SCHEMA_ERROR,
  INTERNAL,
};

inline std::string_view err_name(Err e) {
  switch (e) {
    case Err::KEY_LEN_ERROR: return "KEY_LEN_ERROR";
    case Err::INVALID_PEER_KEY: return "INVALID_PEER_KEY";
    case Err::ALGO_MISMATCH: return "ALGO_MISMATCH";
    case Err::FRAME_TOO_LONG: return "FRAME_TOO_LONG";
    case Err::FRAME_TOO_SHORT: return "FRAME_TOO_SHORT";
    case Err::MALFORMED_FRAME: return "MALFORMED_FRAME";
    case Err::DECRYPT_ERROR: return "DECRYPT_ERROR";
    case Err::ZERO_WINDOW: return "ZERO_WINDOW";
    case Err::CAPACITY_ERROR: return "CAPACITY_ERROR";
    case Err::NO_SUCH_LEVEL: return "NO_SUCH_LEVEL";
    case Err::DOUBLE_DEPRECATE: return "DOUBLE_DEPRECATE";
    case Err::PRIVILEGE_VIOLATION: return "PRIVILEGE_VIOLATION";
    case Err::MODE_UNAVAILABLE: return "MODE_UNAVAILABLE";
    case Err::EMPTY_NETWORK: return "EMPTY_NETWORK";
    case Err::DUPLICATE_NODE: return "DUPLICATE_NODE";
    case Err::NOT_PROVISIONED: return "NOT_PROVISIONED";
    case Err::NO_MEMBERS: return "NO_MEMBERS";
    case Err::NO_LOG: return "NO_LOG";
    case Err::SCHEMA_ERROR: return "SCHEMA_ERROR";
    case Err::INTERNAL: return "INTERNAL";
  }
  return "UNKNOWN";
}

class SimError : public std::runtime_error {
 public:
  SimError(Err code, const std::string& what)
      : std::runtime_error(std::string(err_name(code)) + ": " + what),
        code_(code) {}

  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void raise(Err code, const std::string& what) {
  throw SimError(code, what);
}

}  // namespace simcan
