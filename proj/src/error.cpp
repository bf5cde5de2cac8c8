#include "multilift/error.hpp"

namespace multilift {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::not_skew: return "NotSkew";
    case Errc::degenerate: return "Degenerate";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::singular_mass: return "SingularMass";
    case Errc::non_finite: return "NonFinite";
    case Errc::rank_deficient: return "RankDeficient";
    case Errc::degenerate_tension: return "DegenerateTension";
    case Errc::degenerate_thrust: return "DegenerateThrust";
    case Errc::collinear_heading: return "CollinearHeading";
    case Errc::degenerate_tangent: return "DegenerateTangent";
    case Errc::parse_error: return "ParseError";
    case Errc::validation_error: return "ValidationError";
    case Errc::io_error: return "IOError";
    case Errc::precondition: return "Precondition";
  }
  return "Unknown";
}

}  // namespace multilift
