/**
 * @file test_density.cpp
 * @brief Relative density, Berezin transforms of indicators, kernel tails, Toeplitz bounds.
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bergman/density.hpp"

using namespace bergman;

namespace {

// Area of the intersection of two discs with radii a, b and center distance c.
double lens_area(double a, double b, double c) {
  if (c >= a + b) return 0;
  if (c <= std::abs(a - b)) return pi * std::min(a, b) * std::min(a, b);
  double t1 = a * a * std::acos((c * c + a * a - b * b) / (2 * c * a));
  double t2 = b * b * std::acos((c * c + b * b - a * a) / (2 * c * b));
  double t3 = 0.5 * std::sqrt((-c + a + b) * (c + a - b) * (c - a + b) * (c + a + b));
  return t1 + t2 - t3;
}

// Euclidean center and radius of the pseudo-hyperbolic disc {|phi_z(w)| < r}, z real.
std::pair<double, double> euclid_disc(double z, double r) {
  double den = 1 - r * r * z * z;
  return {z * (1 - r * r) / den, r * (1 - z * z) / den};
}

// T_E(z)^2 for E = {1/2 < |w| < 1} on the disc, p = 2, weight (1 - |w|^2)^alpha, alpha in {0, 1}.
double annulus_berezin_sq(double z, int alpha) {
  double num = 0, den = 0;
  for (int k = 0; k < 4000; ++k) {
    double kk = k;
    double Nk, Ik;
    double q1 = std::pow(0.25, kk + 1), q2 = std::pow(0.25, kk + 2);
    if (alpha == 0) {
      Nk = pi / (kk + 1);
      Ik = pi * (1 - q1) / (kk + 1);
    } else {
      Nk = pi * (1 / (kk + 1) - 1 / (kk + 2));
      Ik = pi * ((1 - q1) / (kk + 1) - (1 - q2) / (kk + 2));
    }
    double zk = std::pow(z * z, kk);
    num += zk * Ik / (Nk * Nk);
    den += zk / Nk;
  }
  return num / den;
}

}  // namespace

TEST_CASE("relative density: whole domain and empty set") {
  for (auto d : {unit_disc(), unit_ball()}) {
    auto centers = collar_centers(d, 4, 1, 6, 3);
    DensityOptions o;
    o.samples = 2000;
    auto all = relative_density(d, whole_domain(d), 0.5, centers, o);
    auto none = relative_density(d, empty_set(), 0.5, centers, o);
    for (std::size_t i = 0; i < centers.size(); ++i) {
      CHECK(all.rows[i].ratio == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(none.rows[i].ratio == 0.0);
    }
  }
}

TEST_CASE("relative density: annulus matches the lens-area oracle") {
  auto d = unit_disc();
  auto E = annulus(0.5);
  DensityOptions o;
  o.samples = 20000;
  o.target_stderr = 0.003;
  o.max_samples = 1 << 20;
  for (double z : {0.5, 0.75, 0.9}) {
    double r = 0.5;
    auto [c, rho] = euclid_disc(z, r);
    double exact = 1 - lens_area(0.5, rho, c) / (pi * rho * rho);
    auto rep = relative_density(d, E, r, {pt(z)}, o);
    CHECK(std::abs(rep.rows[0].ratio - exact) < 4 * rep.rows[0].stderr_ + 1e-9);
  }
}

TEST_CASE("relative density: half-disc near the excluded arc") {
  auto d = unit_disc();
  auto E = halfspace(pt(1.0), 0.0);
  auto rep = relative_density(d, E, 0.5, {pt(-1 + 1e-3)});
  CHECK(rep.rows[0].ratio < 0.01);
  CHECK(rep.rows[0].delta == doctest::Approx(1e-3));
}

TEST_CASE("relative density: halving the sample count stays within two standard errors") {
  auto d = unit_ball();
  auto E = halfspace(pt(0.6, cplx(0, 0.8)), 0.1);
  DensityOptions full, half;
  full.samples = 40000;
  half.samples = 20000;
  full.target_stderr = half.target_stderr = 1;
  half.seed = 99;
  auto z = pt(0.3, 0.4);
  auto a = relative_density(d, E, 0.6, {z}, full);
  auto b = relative_density(d, E, 0.6, {z}, half);
  CHECK(std::abs(a.rows[0].ratio - b.rows[0].ratio) < 2 * b.rows[0].stderr_);
  CHECK(a.ci_lo <= a.ci_hi);
}

TEST_CASE("relative density: monotone in the set") {
  auto d = unit_disc();
  auto centers = collar_centers(d, 6, 1, 5, 11);
  auto small = relative_density(d, annulus(0.8), 0.5, centers);
  auto big = relative_density(d, annulus(0.5), 0.5, centers);
  for (std::size_t i = 0; i < centers.size(); ++i) CHECK(small.rows[i].ratio <= big.rows[i].ratio + 1e-12);
}

TEST_CASE("collar centers sit at dyadic boundary distances") {
  auto d = unit_disc();
  auto c = collar_centers(d, 3, 1, 10, 5, {pt(-1.0)});
  REQUIRE(c.size() == 40);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(delta_of(d, c[i]) == doctest::Approx(std::ldexp(1.0, -static_cast<int>(i % 10) - 1)));
  auto e = ellipsoid(2, 1.0, 4.0);
  for (const auto& z : collar_centers(e, 5, 4, 12, 5)) CHECK(e.contains(z));
}

TEST_CASE("berezin transform of the annulus indicator matches the series") {
  auto d = unit_disc();
  auto E = annulus(0.5);
  for (int alpha : {0, 1}) {
    auto m = closed_form_kernel(d, alpha);
    for (double z : {0.0, 0.3, 0.95}) {
      double t = berezin_indicator(m, E, pt(z), 2.0, alpha);
      CHECK(t == doctest::Approx(std::sqrt(annulus_berezin_sq(z, alpha))).epsilon(3e-3));
    }
  }
  auto m0 = closed_form_kernel(d, 0);
  CHECK(berezin_indicator(m0, E, pt(0.0), 2.0, 0) == doctest::Approx(std::sqrt(0.75)).epsilon(3e-3));
  CHECK(berezin_indicator(m0, E, pt(0.95), 2.0, 0) >= 0.9);
}

TEST_CASE("berezin transform: splitting, monotonicity, bounds") {
  auto d = unit_disc();
  auto m = closed_form_kernel(d, 0);
  auto E1 = annulus(0.8), E2 = annulus(0.5);
  for (double p : {1.5, 2.0, 3.0})
    for (auto z : {pt(0.2), pt(cplx(-0.5, 0.6)), pt(0.97)}) {
      double a = berezin_indicator(m, E2, z, p, 0), b = berezin_indicator(m, complement(d, E2), z, p, 0);
      CHECK(std::pow(a, p) + std::pow(b, p) == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(berezin_indicator(m, E1, z, p, 0) <= a + 1e-12);
      CHECK(a >= 0);
      CHECK(a <= 1 + 1e-12);
      CHECK(berezin_indicator(m, whole_domain(d), z, p, 0) == doctest::Approx(1.0));
    }
}

TEST_CASE("berezin transform decays on the half-disc witness") {
  auto d = unit_disc();
  auto m = closed_form_kernel(d, 0);
  auto E = halfspace(pt(1.0), 0.0);
  std::vector<Point> ray;
  for (int j = 1; j <= 12; ++j) ray.push_back(pt(-1 + std::ldexp(1.0, -j)));
  auto s = berezin_infimum(m, E, 2.0, 0, ray);
  for (std::size_t i = 0; i < ray.size(); ++i) {
    // phi_z maps the half disc onto the cap cut off by the geodesic through phi_z(+-i)
    double x = ray[i][0].real();
    cplx w = (x - cplx(0, 1)) / (1.0 - x * cplx(0, 1));
    double g = std::abs(std::arg(-w));
    double exact = std::sqrt(lens_area(1.0, std::tan(g), 1 / std::cos(g)) / pi);
    CHECK(std::abs(s.value[i] - exact) < 3e-3);
    if (i > 0) CHECK(s.value[i] <= s.value[i - 1] + 1e-12);
  }
  CHECK(s.infimum < 0.05);
}

TEST_CASE("kernel tail: pullback mass of the outer shell") {
  auto d = unit_disc();
  for (int alpha : {0, 1, 2}) {
    auto m = closed_form_kernel(d, alpha);
    for (double r : {0.5, 0.9, 0.99})
      CHECK(kernel_tail(m, pt(0.99), r, 2.0, alpha) == doctest::Approx(std::pow(1 - r * r, 0.5 * (alpha + 1))).epsilon(1e-8));
  }
  auto b = unit_ball();
  auto mb = closed_form_kernel(b, 0);
  for (double r : {0.5, 0.9}) {
    // int_{r^2}^1 x dx / int_0^1 x dx
    double exact = 1 - std::pow(r, 4);
    CHECK(kernel_tail(mb, pt(0.3, cplx(0, 0.6)), r, 2.0, 0) == doctest::Approx(std::sqrt(exact)).epsilon(1e-8));
  }
}

TEST_CASE("kernel tail and in-ball mass are complementary") {
  auto d = unit_disc();
  auto m = closed_form_kernel(d, 0);
  for (double p : {1.5, 3.0}) {
    auto z = pt(cplx(0.6, -0.7));
    double tail = kernel_tail(m, z, 0.8, p, 0);
    double in = kernel_mass_in_ball(m, whole_domain(d), z, 0.8, p, 0);
    CHECK(std::pow(tail, p) + in == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("arc-length rules") {
  CHECK(arc_length_rule(circle(0.0, 0.5)).total() == doctest::Approx(pi).epsilon(1e-13));
  CHECK(arc_length_rule(segment(cplx(0, 0), cplx(0.3, 0.4))).total() == doctest::Approx(0.5).epsilon(1e-14));
  // t -> t^2 traverses [0, 1] once
  CHECK(arc_length_rule(polynomial_path({0.0, 0.0, 1.0})).total() == doctest::Approx(1.0).epsilon(1e-13));
  // circle of radius 1/2 inside the half plane Re > 0: half the circumference
  auto q = arc_length_rule_where(circle(0.0, 0.5), [](const Point& z) { return z[0].real() > 0; });
  CHECK(q.total() == doctest::Approx(0.5 * pi).epsilon(1e-12));
}

TEST_CASE("toeplitz lower bound") {
  auto d = unit_disc();
  EnsembleSpec s;
  s.degree = 30;
  s.random_count = 4;
  s.kernel_points = {pt(-0.9), pt(-0.99)};
  auto ens = make_ensemble(d, s);
  auto one = toeplitz_lower_bound(d, [](const Point&) { return 1.0; }, 0, ens);
  for (double r : one.ratios) CHECK(r == doctest::Approx(1.0));
  auto half = toeplitz_lower_bound(d, [](const Point& z) { return z[0].real() > 0 ? 1.0 : 0.0; }, 0, ens);
  CHECK(half.ratios[0] == doctest::Approx(0.5).epsilon(1e-2));  // constant member
  for (double r : half.ratios) {
    CHECK(r >= 0);
    CHECK(r <= 1);
  }
  CHECK(half.infimum < 0.05);
  CHECK(half.witness.find("kernel") != std::string::npos);
}

TEST_CASE("tail/sup duality on the annulus") {
  auto d = unit_disc();
  auto m = closed_form_kernel(d, 0);
  auto E = annulus(0.5);
  for (double p : {1.5, 2.0, 4.0})
    for (auto z : {pt(0.1), pt(cplx(0.7, 0.2)), pt(-0.96)})
      for (double r : {0.3, 0.6, 0.9}) {
        double lhs = kernel_mass_in_ball(m, E, z, r, p, 0);
        double rhs = std::pow(berezin_indicator(m, E, z, p, 0), p) - std::pow(kernel_tail(m, z, r, p, 0), p);
        // equality up to the mass of the complement outside the ball; 1e-6 is the quadrature accuracy
        CHECK(lhs >= rhs - 1e-6);
      }
}

TEST_CASE("toeplitz infimum on the annulus is stable in the ensemble degree") {
  auto d = unit_disc();
  std::vector<double> inf;
  for (int deg : {10, 30, 50}) {
    EnsembleSpec s;
    s.degree = deg;
    s.random_count = 8;
    s.kernel_points = {pt(0.0), pt(0.5), pt(-0.9), pt(cplx(0, 0.99))};
    auto ens = make_ensemble(d, s);
    inf.push_back(toeplitz_lower_bound(d, [](const Point& z) { return std::abs(z[0]) > 0.5 ? 1.0 : 0.0; }, 0, ens).infimum);
  }
  for (double v : inf) CHECK(v == doctest::Approx(0.75).epsilon(0.02));  // the constant member is the minimizer
}
