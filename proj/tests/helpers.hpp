#pragma once

#include <optional>

#include "flashe/error.hpp"

namespace flashe::test {

// Runs fn and reports the ErrorCode it threw, or nullopt if it completed.
template <typename Fn>
std::optional<ErrorCode> code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace flashe::test
