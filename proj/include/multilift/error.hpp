#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace multilift {

enum class Errc {
  not_skew,
  degenerate,
  dimension_mismatch,
  singular_mass,
  non_finite,
  rank_deficient,
  degenerate_tension,
  degenerate_thrust,
  collinear_heading,
  degenerate_tangent,
  parse_error,
  validation_error,
  io_error,
  precondition,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace multilift
