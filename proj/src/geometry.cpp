#include "multilift/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "multilift/error.hpp"

namespace multilift {

Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Vec3 vee(const Mat3& m, double tol) {
  const double asym = (m + m.transpose()).norm();
  if (!(asym <= tol)) {
    throw Error(Errc::not_skew, "symmetric part has norm " + std::to_string(asym));
  }
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

Mat3 expm(const Vec3& v) {
  const double theta = v.norm();
  const Mat3 K = hat(v);
  if (theta < 1e-8) {
    return Mat3::Identity() + K + 0.5 * K * K;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * K + b * K * K;
}

Vec3 logm(const Mat3& R) {
  const Eigen::AngleAxisd aa(Eigen::Quaterniond(R).normalized());
  return aa.angle() * aa.axis();
}

double orthogonality_error(const Mat3& R) {
  return (R.transpose() * R - Mat3::Identity()).norm();
}

bool is_rotation(const Mat3& R, double tol) {
  return R.allFinite() && orthogonality_error(R) <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

bool is_unit(const Vec3& q, double tol) { return q.allFinite() && std::abs(q.norm() - 1.0) <= tol; }

AttitudeError attitude_error(const Mat3& R, const Mat3& R_d, const Vec3& Omega,
                             const Vec3& Omega_d) {
  const Mat3 RdtR = R_d.transpose() * R;
  AttitudeError err;
  const Mat3 skew = 0.5 * (RdtR - RdtR.transpose());
  err.e_R = Vec3(skew(2, 1), skew(0, 2), skew(1, 0));
  err.e_Omega = Omega - R.transpose() * R_d * Omega_d;
  err.psi = std::clamp(0.5 * (3.0 - RdtR.trace()), 0.0, 2.0);
  return err;
}

LinkError link_error(const Vec3& q, const Vec3& q_d, const Vec3& omega, const Vec3& omega_d) {
  const Mat3 qhat = hat(q);
  LinkError err;
  err.e_q = q_d.cross(q);
  err.e_omega = omega + qhat * qhat * omega_d;
  err.psi = std::clamp(1.0 - q.dot(q_d), 0.0, 2.0);
  return err;
}

Mat3 project_rotation(const Mat3& R) {
  Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& U = svd.matrixU();
  const Mat3& V = svd.matrixV();
  Mat3 D = Mat3::Identity();
  // Singular values are sorted descending; flip the weakest direction on a reflection.
  if ((U * V.transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  return U * D * V.transpose();
}

LinkDirection project_link(const Vec3& q, const Vec3& omega) {
  const Vec3 qn = q.normalized();
  return {qn, omega - qn * qn.dot(omega)};
}

Reprojected reproject(const Mat3& R, const Vec3& q, const Vec3& omega) {
  if (!R.allFinite() || !q.allFinite() || !omega.allFinite()) {
    throw Error(Errc::degenerate, "non-finite input to reproject");
  }
  if (orthogonality_error(R) >= 0.1 || std::abs(R.determinant()) < 1e-6) {
    throw Error(Errc::degenerate, "matrix too far from SO(3) to reproject");
  }
  const double qn = q.norm();
  if (!(qn > kMinLinkNorm) || !std::isfinite(qn)) {
    throw Error(Errc::degenerate, "link direction vector is near zero");
  }
  const LinkDirection link = project_link(q, omega);
  return {project_rotation(R), link.q, link.omega};
}

}  // namespace multilift
