#ifndef FEDSIM_ERROR_HPP
#define FEDSIM_ERROR_HPP

#include <stdexcept>
#include <string>
#include <utility>

namespace fedsim {

/// Domain error with a stable, machine-checkable code string.
/// The code is the contract ("duplicate entity id", "depth exhausted", ...);
/// the detail is free-form context for humans.
class Error : public std::runtime_error {
 public:
  explicit Error(std::string code, const std::string& detail = "")
      : std::runtime_error(detail.empty() ? code : code + ": " + detail),
        code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// Raised when a topology or scenario document cannot be parsed or loaded.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedsim

#endif  // FEDSIM_ERROR_HPP
