#include "leakprobe/error.hpp"

namespace leakprobe {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::io: return "io";
    case ErrorKind::manifest: return "manifest";
    case ErrorKind::duplicate_id: return "duplicate_id";
    case ErrorKind::missing_payload: return "missing_payload";
    case ErrorKind::decode: return "decode";
    case ErrorKind::dim_mismatch: return "dim_mismatch";
    case ErrorKind::empty_index: return "empty_index";
    case ErrorKind::unknown_command: return "unknown_command";
    case ErrorKind::corpus_too_small: return "corpus_too_small";
    case ErrorKind::transport: return "transport";
    case ErrorKind::contract: return "contract";
    case ErrorKind::exhausted: return "exhausted";
    case ErrorKind::parse: return "parse";
    case ErrorKind::config: return "config";
    case ErrorKind::validation: return "validation";
    case ErrorKind::invalid_argument: return "invalid_argument";
  }
  return "unknown";
}

namespace {

std::string format_message(ErrorKind kind, const std::string& reason,
                           const std::string& subject) {
  std::string out(to_string(kind));
  if (!subject.empty()) out += " [" + subject + "]";
  out += ": " + reason;
  return out;
}

}  // namespace

Error::Error(ErrorKind kind, const std::string& reason, std::string subject)
    : std::runtime_error(format_message(kind, reason, subject)),
      kind_(kind),
      subject_(std::move(subject)),
      reason_(reason) {}

}  // namespace leakprobe
