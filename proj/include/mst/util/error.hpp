#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mst {

// Base of every error the library throws. code() is a stable identifier
// (e.g. "MalformedHeader") that tests and the CLI match on.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  [[nodiscard]] virtual std::string_view code() const noexcept = 0;
  // Internal errors are broken invariants in the caller's data structures
  // rather than bad input; the CLI maps them to exit code 2.
  [[nodiscard]] virtual bool is_internal() const noexcept { return false; }
};

}  // namespace mst
