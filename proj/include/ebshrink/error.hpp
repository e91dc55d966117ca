#ifndef EBSHRINK_ERROR_HPP
#define EBSHRINK_ERROR_HPP

#include <stdexcept>
#include <string>

namespace ebshrink {

enum class ErrorKind {
  RankDeficient,
  BadShape,
  NonFinite,
  InvalidParams,
  DegenerateResponsibilities,
  BadConfig,
  DegenerateLabels,
  ParseError,
  NaInCovariates,
  FoldTooSmall,
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ebshrink

#endif
