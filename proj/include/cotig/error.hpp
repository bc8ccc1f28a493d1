#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cotig {

enum class ErrorKind {
  parse,
  schema,
  conflict,
  config,
  capacity,
  alignment,
  join,
  format,
  incompatible,
  domain,
  empty_support,
  no_decision,
  transport,
  judge_undecided,
  pipeline_order,
  usage,
  io,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the toolkit. The kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

/// CLI exit status for an error kind: 2 usage, 3 pipeline order, 4 data, 5 external service.
int exit_code_for(ErrorKind kind);

}  // namespace cotig
