#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace leakprobe {

enum class ErrorKind {
  io,
  manifest,
  duplicate_id,
  missing_payload,
  decode,
  dim_mismatch,
  empty_index,
  unknown_command,
  corpus_too_small,
  transport,
  contract,
  exhausted,
  parse,
  config,
  validation,
  invalid_argument,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure the library reports. `subject` names the offending object
// (an entry id, a path, a command id) when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& reason, std::string subject = {});

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& subject() const noexcept { return subject_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  ErrorKind kind_;
  std::string subject_;
  std::string reason_;
};

}  // namespace leakprobe
