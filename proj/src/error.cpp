#include "ebshrink/error.hpp"

namespace ebshrink {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::BadShape: return "BadShape";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::DegenerateResponsibilities: return "DegenerateResponsibilities";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::NaInCovariates: return "NaInCovariates";
    case ErrorKind::FoldTooSmall: return "FoldTooSmall";
    case ErrorKind::Io: return "Io";
  }
  return "Error";
}

}  // namespace ebshrink
