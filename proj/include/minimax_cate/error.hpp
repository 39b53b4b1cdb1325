#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace minimax_cate {

// Domain error carrying a module-qualified code, e.g. "core.NonPositiveVariance".
// The CLI maps these to exit status 1 and a structured report.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

}  // namespace minimax_cate
