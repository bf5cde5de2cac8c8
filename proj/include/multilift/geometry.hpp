#pragma once

// Coordinate-free primitives on SO(3) and the two-sphere.

#include <Eigen/Dense>

namespace multilift {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline const Vec3 kE1{1.0, 0.0, 0.0};
inline const Vec3 kE2{0.0, 1.0, 0.0};
/// Inertial third axis; points down along gravity.
inline const Vec3 kE3{0.0, 0.0, 1.0};

inline constexpr double kRotationTol = 1e-9;
inline constexpr double kUnitTol = 1e-9;
inline constexpr double kSkewTol = 1e-8;

/// hat(v) * w == v.cross(w).
Mat3 hat(const Vec3& v);

/// Inverse of hat. Throws Errc::not_skew when ||m + m^T||_F > tol.
Vec3 vee(const Mat3& m, double tol = kSkewTol);

/// Rodrigues formula for exp(hat(v)).
Mat3 expm(const Vec3& v);

/// Principal logarithm, returned as the rotation vector. Valid for angles in [0, pi].
Vec3 logm(const Mat3& R);

/// ||R^T R - I||_F
double orthogonality_error(const Mat3& R);
bool is_rotation(const Mat3& R, double tol = kRotationTol);
bool is_unit(const Vec3& q, double tol = kUnitTol);

struct AttitudeError {
  Vec3 e_R;
  Vec3 e_Omega;
  /// 0.5 tr(I - R_d^T R), in [0, 2].
  double psi;
};

AttitudeError attitude_error(const Mat3& R, const Mat3& R_d, const Vec3& Omega,
                             const Vec3& Omega_d);

struct LinkError {
  Vec3 e_q;
  Vec3 e_omega;
  /// 1 - q . q_d, in [0, 2]. Equals 2 at the antipodal configuration where e_q vanishes.
  double psi;
};

LinkError link_error(const Vec3& q, const Vec3& q_d, const Vec3& omega, const Vec3& omega_d);

/// Nearest rotation in the Frobenius norm (polar factor with determinant correction).
Mat3 project_rotation(const Mat3& R);

struct LinkDirection {
  Vec3 q;
  Vec3 omega;
};

/// Normalizes q and removes the component of omega along it.
LinkDirection project_link(const Vec3& q, const Vec3& omega);

struct Reprojected {
  Mat3 R;
  Vec3 q;
  Vec3 omega;
};

inline constexpr double kMinLinkNorm = 1e-6;

/// Pulls a drifted (R, q, omega) back onto SO(3) x TS^2.
/// Throws Errc::degenerate when R is far from orthogonal or singular, or q is near zero.
Reprojected reproject(const Mat3& R, const Vec3& q, const Vec3& omega);

}  // namespace multilift
