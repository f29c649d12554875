#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fdnet {

/// Failure categories raised across the library. Every public entry point
/// reports errors by throwing fdnet::Error carrying one of these.
enum class Errc {
  invalid_shape,
  invalid_argument,
  invalid_parameter,
  sequence_too_short,
  numeric_failure,
  numeric_input,
  degenerate_weight,
  invalid_plan,
  schema,
  parse,
  invalid_split,
  insufficient_data,
  training_diverged,
  incompatible_checkpoint,
  corrupt_checkpoint,
  undefined_scale,
  undefined_owa,
  invalid_sample,
  incompatible_data,
  invalid_window,
  io,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace fdnet
