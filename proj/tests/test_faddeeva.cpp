#include <doctest.h>

#include <cmath>
#include <random>

#include "qcw/faddeeva.hpp"
#include "qcw/types.hpp"

using namespace qcw;

// Reference values computed with an independent high-accuracy implementation
// of w(z) (Poppe-Wijers grade). Columns: x, y, Re w, Im w.
namespace {
constexpr double kRef[][4] = {
    {0.0, 0.0, 1.0, 0.0},
    {1.0, 1.0, 0.30474420525691254, 0.2082189382028316},
    {0.5, 1e-06, 0.7788001336177999, 0.47892439410106413},
    {5.5, 0.25, 0.004904113821111675, 0.10413194961137942},
    {0.2, 0.0, 0.9607894391523232, 0.2197530088228057},
    {3.9, 4.1, 0.07319666638948333, 0.06749755192367883},
    {12.0, 0.5, 0.0019762436764948045, 0.047097556962267806},
    {0.0, 8.0, 0.06998516620088094, 0.0},
    {2.0, 1e-12, 0.018315638888965903, 0.34002621706599306},
    {20.0, 30.0, 0.013020908424138862, 0.008673934748446676},
    {0.001, 0.0001, 0.9998861723086843, 0.0011281784376085257},
};
}

TEST_CASE("faddeeva_w reproduces reference values to 1e-11") {
  for (const auto& row : kRef) {
    const auto w = faddeeva_w({row[0], row[1]});
    CHECK(w.real() == doctest::Approx(row[2]).epsilon(1e-11));
    if (row[3] != 0.0) CHECK(w.imag() == doctest::Approx(row[3]).epsilon(1e-11));
  }
}

TEST_CASE("faddeeva_w matches the defining integral on random points") {
  // oracle: direct quadrature of w(z) = (i/pi) int exp(-t^2)/(z - t) dt,
  // evaluated by midpoint rule on a wide fine grid (valid for y not tiny)
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ux(-8.0, 8.0);
  std::uniform_real_distribution<double> uy(0.3, 8.0);
  for (int trial = 0; trial < 12; ++trial) {
    const double x = ux(rng);
    const double y = uy(rng);
    const std::complex<double> z(x, y);
    std::complex<double> sum = 0.0;
    const double h = 1e-3;
    for (double t = -10.0; t <= 10.0; t += h)
      sum += std::exp(-t * t) / (z - t);
    const std::complex<double> oracle = std::complex<double>(0.0, h / kPi) * sum;
    const auto w = faddeeva_w(z);
    CHECK(std::abs(w - oracle) <= 1e-6 * std::abs(oracle));
  }
}

TEST_CASE("faddeeva_w symmetry w(-conj z) = conj w(z) on the real axis slice") {
  for (double x : {0.3, 1.7, 4.4, 9.2}) {
    for (double y : {1e-9, 0.01, 0.8, 3.0}) {
      const auto wp = faddeeva_w({x, y});
      const auto wm = faddeeva_w({-x, y});
      CHECK(wp.real() == doctest::Approx(wm.real()).epsilon(1e-12));
      CHECK(wp.imag() == doctest::Approx(-wm.imag()).epsilon(1e-12));
    }
  }
}

TEST_CASE("faddeeva_w rejects the lower half plane") {
  CHECK_THROWS_AS(faddeeva_w({1.0, -0.1}), DomainError);
}

TEST_CASE("erfcx agrees with exp(t^2) erfc(t) and handles negatives") {
  for (double t : {0.0, 0.1, 0.9, 2.0, 5.0, 8.0, 20.0, 100.0}) {
    const double direct = t < 6.0 ? std::exp(t * t) * std::erfc(t) : 0.0;
    if (t < 6.0) CHECK(erfcx(t) == doctest::Approx(direct).epsilon(1e-12));
    // asymptotic sanity: erfcx(t) ~ 1/(t sqrt(pi))
    if (t >= 8.0) CHECK(erfcx(t) * t * std::sqrt(kPi) == doctest::Approx(1.0).epsilon(0.01));
  }
  CHECK(erfcx(-1.0) == doctest::Approx(2.0 * std::exp(1.0) - erfcx(1.0)).epsilon(1e-12));
}
