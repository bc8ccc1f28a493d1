#include "cotig/error.hpp"

namespace cotig {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse error";
    case ErrorKind::schema: return "schema error";
    case ErrorKind::conflict: return "conflict error";
    case ErrorKind::config: return "configuration error";
    case ErrorKind::capacity: return "capacity error";
    case ErrorKind::alignment: return "alignment error";
    case ErrorKind::join: return "join error";
    case ErrorKind::format: return "format error";
    case ErrorKind::incompatible: return "incompatibility error";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::empty_support: return "empty-support error";
    case ErrorKind::no_decision: return "no-decision error";
    case ErrorKind::transport: return "transport error";
    case ErrorKind::judge_undecided: return "judge-undecided error";
    case ErrorKind::pipeline_order: return "pipeline-order error";
    case ErrorKind::usage: return "usage error";
    case ErrorKind::io: return "i/o error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::config:
      return 2;
    case ErrorKind::pipeline_order:
      return 3;
    case ErrorKind::transport:
    case ErrorKind::judge_undecided:
      return 5;
    default:
      return 4;
  }
}

}  // namespace cotig
