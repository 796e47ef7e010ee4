#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace longctx {

/// Exception with a stable machine-readable kind. The CLI surfaces failures
/// as {"error": {"kind": ..., "message": ...}}, so kinds are part of the
/// external contract and must not be renamed casually.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

namespace errkind {
inline constexpr const char* dimension = "dimension";
inline constexpr const char* config = "config";
inline constexpr const char* domain = "domain";
inline constexpr const char* causality = "causality";
inline constexpr const char* empty_row = "empty_row";
inline constexpr const char* empty_calibration = "empty_calibration";
inline constexpr const char* ambiguous_keyword = "ambiguous_keyword";
inline constexpr const char* range = "range";
inline constexpr const char* io = "io";
inline constexpr const char* parse = "parse_error";
inline constexpr const char* schema = "schema_violation";
}  // namespace errkind

[[noreturn]] inline void fail(const char* kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace longctx
