#include <cmath>

#include "doctest.h"
#include "multilift/certifier.hpp"
#include "support.hpp"

using namespace multilift;

namespace {

const Mat3 kJ = Vec3(0.0820, 0.0845, 0.1377).asDiagonal();

GainSet stiff_gains() {
  GainSet g;
  g.k_x0 = 16;
  g.k_v0 = 8;
  g.k_R0 = 40;
  g.k_Omega0 = 8;
  g.k_q = 1e6;
  g.k_omega = 2000;
  return g;
}

const ErrorDomain kStiffDomain{0.02, 0.01, 1e-4};

struct StaticCommand final : PayloadCommand {
  CommandSample sample;
  CommandSample at(double) const override { return sample; }
};

}  // namespace

TEST_CASE("link block of W") {
  const Scenario sc = testing::fig8();
  const CertificateConstants k = certificate_constants(sc.params, 1.0);
  const OuterLoopReport r = outer_loop_matrices(sc.params, sc.gains, sc.domain, k, {0.1, 0.1, 0.5});
  Mat2 expected;
  expected << 20, -2, -2, 7.5;
  for (const AgentBlocks& b : r.agents) CHECK((b.W_q - expected).norm() < 1e-12);
  CHECK(min_eigenvalue(r.agents[0].W_q) > 0.0);
}

TEST_CASE("structural limits of the outer-loop matrices") {
  const Scenario sc = testing::fig8();
  const CertificateConstants k = certificate_constants(sc.params, 1.0);
  const OuterLoopReport at_zero =
      outer_loop_matrices(sc.params, stiff_gains(), kStiffDomain, k, {0, 0.1, 0.1});
  CHECK(std::abs(min_eigenvalue(at_zero.agents[0].W_x)) < 1e-12);
  CHECK_FALSE(at_zero.pass);

  ErrorDomain tight = sc.domain;
  tight.psi_q = 1e-14;
  const OuterLoopReport r = outer_loop_matrices(sc.params, sc.gains, tight, k, {0.1, 0.1, 0.1});
  CHECK(r.agents[0].W_xR.norm() < 1e-5);
}

TEST_CASE("default gains on the bundled domain are not admissible") {
  const Scenario sc = testing::fig8();
  const CertificateConstants k = certificate_constants(sc.params, 1.0);
  const double nab = 3.0 * sc.domain.alpha_q() * k.beta;
  CHECK(nab == doctest::Approx(1.665).epsilon(1e-3));
  const OuterLoopReport r = outer_loop_matrices(sc.params, sc.gains, sc.domain, k, {0.1, 0.1, 0.1});
  CHECK_FALSE(r.domain_admissible);
}

TEST_CASE("cross-constant search") {
  const Scenario sc = testing::fig8();
  const CertificateConstants k = certificate_constants(sc.params, 20.0);
  const CrossConstantSearch grid{1e-4, 10.0, 15};

  const auto serial = search_cross_constants(sc.params, stiff_gains(), kStiffDomain, k, grid,
                                             Execution::serial);
  const auto parallel = search_cross_constants(sc.params, stiff_gains(), kStiffDomain, k, grid,
                                               Execution::parallel);
  REQUIRE(serial.has_value());
  REQUIRE(parallel.has_value());
  CHECK(serial->c_x == parallel->c_x);
  CHECK(serial->c_R == parallel->c_R);
  CHECK(serial->c_q == parallel->c_q);
  CHECK(outer_loop_matrices(sc.params, stiff_gains(), kStiffDomain, k, *serial).pass);

  GainSet no_link = stiff_gains();
  no_link.k_q = 0.0;
  CHECK_FALSE(search_cross_constants(sc.params, no_link, kStiffDomain, k, grid).has_value());
}

TEST_CASE("inner-loop certificate") {
  const InnerLoopReport r = inner_loop_certificate(kJ, 1.0, 0.5, 1.0);
  const double expected = 4 * 0.5 * 0.082 * 0.082 / (0.25 * 0.1377 + 4 * 0.082 * 0.082);
  CHECK(r.c3_max == doctest::Approx(expected).epsilon(1e-12));
  CHECK(r.c3_max == doctest::Approx(0.2193).epsilon(1e-3));
  CHECK(r.c3 == doctest::Approx(0.5 * r.c3_max));
  CHECK(r.lambda_min_L1 > 0.0);
  CHECK(r.lambda_min_L2 > 0.0);
  CHECK(r.lambda_min_U > 0.0);
  CHECK(r.pass);

  const InnerLoopReport weak = inner_loop_certificate(kJ, 1.0, 1e-6, 1.0);
  CHECK(weak.c3 < 1e-6);
  const InnerLoopReport edge = inner_loop_certificate(kJ, 1.0, 0.5, 2.0 - 1e-9);
  CHECK(edge.L2(0, 0) > 1e8);
  CHECK(edge.lambda_min_L2 > 0.0);
  CHECK(edge.pass);
}

TEST_CASE("U fails when the rate gain does not exceed c3") {
  InnerLoopReport r = inner_loop_certificate(kJ, 1.0, 0.5, 1.0);
  const double c3 = 0.6;
  const double k_Omega = 0.5;
  Mat2 U;
  U << c3 * 1.0 / 0.1377, -c3 * k_Omega / (2 * 0.082), -c3 * k_Omega / (2 * 0.082), k_Omega - c3;
  CHECK(min_eigenvalue(U) < 0.0);
  CHECK(r.U(1, 1) == doctest::Approx(k_Omega - r.c3));
}

TEST_CASE("bound on the trajectory terms") {
  const Scenario sc = testing::fig8();
  StaticCommand hover;
  const double B_hover = estimate_B(sc.params, hover, 10.0, 100);
  CHECK(B_hover > 0.0);

  SystemParams weightless = sc.params;
  weightless.gravity = 0.0;
  CHECK(estimate_B(weightless, hover, 10.0, 100) == 0.0);

  const SinusoidCommand fig8(sc.command);
  const double B1 = estimate_B(sc.params, fig8, 10.0, 1000);
  const double B2 = estimate_B(sc.params, fig8, 10.0, 2000);
  CHECK(std::isfinite(B1));
  CHECK(std::abs(B2 - B1) < 0.01 * B1);
}

TEST_CASE("certificate report") {
  const Scenario sc = testing::fig8();
  const CertificateReport r =
      certify(sc.params, stiff_gains(), kStiffDomain, 20.0, 1.0, {1e-4, 10.0, 15});
  CHECK(r.feasible);
  CHECK(r.pass);
  CHECK(r.inner.size() == 3);
  const nlohmann::json j = to_json(r);
  CHECK(j["verdict"] == "pass");
}
