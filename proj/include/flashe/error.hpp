#pragma once

#include <stdexcept>
#include <string>

namespace flashe {

enum class ErrorCode {
  InvalidArgument,  // bad parameter or precondition violation
  RoundMismatch,    // ciphertexts from different rounds (protocol desync)
  LengthMismatch,   // residue vectors / masks of unequal length
  ParamsMismatch,   // scheme parameters differ between operands
  Parse,            // malformed wire bytes
  CacheOverflow,    // precompute request exceeds cache capacity
  Inconsistent,     // masks/counts disagree at decrypt time
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

}  // namespace flashe
