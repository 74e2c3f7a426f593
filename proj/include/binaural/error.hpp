#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace binaural {

enum class Errc {
  invalid_argument,
  empty_stream,
  not_power_of_two,
  silent_bin,
  silent_channel,
  no_valid_frequency,
  format,
  compatibility,
  divergence,
  shape_mismatch,
  io,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::empty_stream: return "empty_stream";
    case Errc::not_power_of_two: return "not_power_of_two";
    case Errc::silent_bin: return "silent_bin";
    case Errc::silent_channel: return "silent_channel";
    case Errc::no_valid_frequency: return "no_valid_frequency";
    case Errc::format: return "format";
    case Errc::compatibility: return "compatibility";
    case Errc::divergence: return "divergence";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::io: return "io";
  }
  return "unknown";
}

/// Library-wide exception. Every failure carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace binaural
