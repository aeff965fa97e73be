#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "bergman/geometry.hpp"

using namespace bergman;

namespace {

// Brute-force nearest boundary point of sum a_i |q_i|^2 = 1 (n = 2): a dense parameter grid
// followed by repeated zoomed grids around the incumbent.
double brute_force_ellipsoid_distance(double a1, double a2, const Point& z) {
  auto q = [&](double e, double t1, double t2) {
    return Point{std::cos(e) / std::sqrt(a1) * std::polar(1.0, t1), std::sin(e) / std::sqrt(a2) * std::polar(1.0, t2)};
  };
  const int m = 100;  // 10^6 samples
  double best = 1e9, be = 0, b1 = 0, b2 = 0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) {
        double e = 0.5 * pi * i / (m - 1), t1 = 2 * pi * j / m, t2 = 2 * pi * k / m;
        double d = abs(z - q(e, t1, t2));
        if (d < best) best = d, be = e, b1 = t1, b2 = t2;
      }
  double span = 2 * pi / m;
  for (int round = 0; round < 30; ++round) {
    double ce = be, c1 = b1, c2 = b2;
    for (int i = -10; i <= 10; ++i)
      for (int j = -10; j <= 10; ++j)
        for (int k = -10; k <= 10; ++k) {
          double e = std::clamp(ce + span * i / 10, 0.0, 0.5 * pi), t1 = c1 + span * j / 10, t2 = c2 + span * k / 10;
          double d = abs(z - q(e, t1, t2));
          if (d < best) best = d, be = e, b1 = t1, b2 = t2;
        }
    span *= 0.3;
  }
  return best;
}

Point random_point_in_ball(Rng& rng, int n, double min_delta) {
  std::uniform_real_distribution<double> U(0, 1);
  std::normal_distribution<double> nd;
  Point v{cplx(nd(rng), nd(rng)), n == 2 ? cplx(nd(rng), nd(rng)) : cplx(0)};
  double lo = std::log(min_delta);
  double delta = std::exp(lo + U(rng) * (std::log(0.9) - lo));
  return ((1 - delta) / abs(v)) * v;
}

}  // namespace

TEST_CASE("boundary distance on the disc") {
  auto d = unit_disc();
  auto b0 = boundary_distance(d, pt(0.0));
  CHECK(b0.delta == 1.0);
  CHECK_FALSE(b0.unique);
  auto b = boundary_distance(d, pt(0.6));
  CHECK(b.delta == doctest::Approx(0.4));
  CHECK(std::abs(b.proj[0] - cplx(1.0)) < 1e-15);
  CHECK_THROWS_AS(boundary_distance(d, pt(1.5)), BergmanError);
}

TEST_CASE("ellipsoid boundary distance matches brute-force boundary sampling") {
  auto d = ellipsoid(2, 1.0, 2.0);
  for (Point z : {pt(0.5, 0.0), pt(cplx(0.3, 0.1), cplx(0, 0.2)), pt(cplx(-0.1, 0.05), cplx(0.4, -0.2))}) {
    auto bp = boundary_distance(d, z);
    double oracle = brute_force_ellipsoid_distance(1.0, 2.0, z);
    CHECK(std::abs(bp.delta - oracle) < 1e-6);
    CHECK(std::abs(d.rho(bp.proj)) < 1e-10);
    CHECK(abs(z - bp.proj) == doctest::Approx(bp.delta).epsilon(1e-12));
  }
}

TEST_CASE("custom domain projection agrees with the ellipsoid closed form") {
  auto e = ellipsoid(1, 2.0);
  auto c = custom_domain(1, [](const Point& z) { return 2.0 * std::norm(z[0]) - 1.0; }, {-1, -1, 0, 0}, {1, 1, 0, 0});
  for (cplx z : {cplx(0.3, 0.1), cplx(-0.5, 0.2), cplx(0.0, 0.6)}) {
    auto a = boundary_distance(e, pt(z));
    auto b = boundary_distance(c, pt(z));
    CHECK(b.delta == doctest::Approx(a.delta).epsilon(1e-7));
    CHECK(b.residual < 1e-9);
  }
  // off-axis ellipse: 1 - Lipschitz on random pairs
  auto f = custom_domain(1, [](const Point& z) { return std::norm(z[0].real() / 1.0) + std::norm(z[0].imag() / 0.6) - 1.0; },
                         {-1, -1, 0, 0}, {1, 1, 0, 0});
  Rng rng(4);
  std::uniform_real_distribution<double> U(-0.5, 0.5);
  for (int k = 0; k < 30; ++k) {
    Point z = pt(cplx(U(rng), 0.6 * U(rng))), w = pt(cplx(U(rng), 0.6 * U(rng)));
    CHECK(delta_of(f, z) <= delta_of(f, w) + abs(z - w) + 1e-9);
  }
}

TEST_CASE("Kobayashi distance: closed forms and Moebius oracle") {
  auto d = unit_disc();
  auto k = kobayashi_distance(d, pt(0.0), pt(0.5));
  CHECK(k.exact);
  CHECK(k.lower == doctest::Approx(std::atanh(0.5)).epsilon(1e-15));
  // map z to 0 with phi_z and read |phi_z(w)|
  cplx z = 0.3, w = -0.3;
  cplx phi = (z - w) / (1.0 - std::conj(z) * w);
  double oracle = std::atanh(std::abs(phi));
  CHECK(std::abs(kobayashi_distance(d, pt(z), pt(w)).lower - oracle) < 1e-12);
  CHECK(std::abs(oracle - std::atanh(0.6 / 1.09)) < 1e-12);
  auto b = unit_ball();
  CHECK(kobayashi_distance(b, pt(0.0, 0.0), pt(0.5, 0.0)).lower == doctest::Approx(std::atanh(0.5)).epsilon(1e-15));
  CHECK_THROWS(kobayashi_distance(d, pt(0.0), pt(1.2)));
}

TEST_CASE("ball automorphism is an involution with phi_a(0) = a") {
  Rng rng(12);
  for (int n : {1, 2})
    for (int k = 0; k < 50; ++k) {
      Point a = random_point_in_ball(rng, n, 1e-3), u = random_point_in_ball(rng, n, 1e-3);
      CHECK(abs(ball_automorphism(a, Point{}, n) - a) < 1e-14);
      CHECK(abs(ball_automorphism(a, ball_automorphism(a, u, n), n) - u) < 1e-9);
    }
}

TEST_CASE("distance symmetry and triangle inequality on exact domains") {
  Rng rng(5);
  for (auto d : {unit_disc(), unit_ball()})
    for (int k = 0; k < 300; ++k) {
      Point x = random_point_in_ball(rng, d.n, 1e-4), y = random_point_in_ball(rng, d.n, 1e-4), z = random_point_in_ball(rng, d.n, 1e-4);
      double dxy = kobayashi_distance(d, x, y).lower, dyx = kobayashi_distance(d, y, x).lower;
      double dxz = kobayashi_distance(d, x, z).lower, dzy = kobayashi_distance(d, z, y).lower;
      CHECK(std::abs(dxy - dyx) <= 1e-12 * std::max(1.0, dxy));
      CHECK(dxy <= dxz + dzy + 1e-12 * std::max(1.0, dxy));
    }
}

TEST_CASE("ellipsoid band contains the exact distance from the linear pullback") {
  auto d = ellipsoid(2, 1.0, 2.0);
  d.band_C = calibrate_band_constant(2);
  Rng rng(8);
  std::uniform_real_distribution<double> U(0, 1);
  int inside = 0, total = 0;
  for (int k = 0; k < 300; ++k) {
    Point a = d.from_ball(random_point_in_ball(rng, 2, 1e-3)), b = d.from_ball(random_point_in_ball(rng, 2, 1e-3));
    if (delta_of(d, a) > d.collar_eps0 || delta_of(d, b) > d.collar_eps0) continue;
    auto band = kobayashi_distance(d, a, b);
    double exact = kobayashi_exact(d, a, b);
    ++total;
    if (band.lower <= exact && exact <= band.upper) ++inside;
    CHECK(band.lower >= 0.0);
    CHECK(band.lower <= band.upper);
  }
  REQUIRE(total > 50);
  CHECK(inside == total);
}

TEST_CASE("ball membership") {
  auto d = unit_disc();
  KobayashiBall y{pt(0.0), 0.5};
  CHECK(ball_membership(d, y, pt(0.4)) == Membership::Inside);
  CHECK(ball_membership(d, y, pt(0.6)) == Membership::Outside);
  CHECK(ball_membership(d, y, pt(2.0)) == Membership::Outside);

  auto e = ellipsoid(2, 1.0, 2.0);
  e.band_C = calibrate_band_constant(2);
  Point w = pt(0.9, 0.0);  // delta = 0.1
  REQUIRE(delta_of(e, w) == doctest::Approx(0.1));
  auto f = fit_polydisc_frame(e, w, 0.3);
  KobayashiBall yb{w, 0.3};
  Rng rng(2);
  std::uniform_real_distribution<double> U(0, 1);
  for (int k = 0; k < 200; ++k) {
    Point l{f.a * f.delta * std::sqrt(U(rng)) * std::polar(1.0, 2 * pi * U(rng)),
            f.b * std::sqrt(f.delta) * std::sqrt(U(rng)) * std::polar(1.0, 2 * pi * U(rng))};
    Point z = w + frame_adjoint(f.U, 0.999 * l);
    CHECK(ball_membership(e, yb, z, &f) == Membership::Inside);
    CHECK(kobayashi_exact(e, w, z) < std::atanh(0.3));
  }
}

TEST_CASE("polydisc sandwich and unitarity") {
  Rng rng(3);
  std::uniform_real_distribution<double> U(0, 1);
  for (auto d : {unit_disc(), unit_ball(), ellipsoid(2, 1.0, 2.0)}) {
    for (double r : {0.3, 0.6}) {
      for (int c = 0; c < 4; ++c) {
        Point w = d.from_ball(random_point_in_ball(rng, d.n, 1e-3));
        auto f = fit_polydisc_frame(d, w, r);
        CHECK(f.unitarity_defect() < 1e-14);
        CHECK(f.a > 0);
        if (d.n == 2) CHECK(f.b > 0);
        // inner polydisc samples are ball members
        for (int k = 0; k < 100; ++k) {
          Point l{f.a * f.delta * std::sqrt(U(rng)) * std::polar(1.0, 2 * pi * U(rng)),
                  d.n == 2 ? f.b * std::sqrt(f.delta) * std::sqrt(U(rng)) * std::polar(1.0, 2 * pi * U(rng)) : cplx(0)};
          CHECK(kobayashi_exact(d, w, w + frame_adjoint(f.U, l)) < std::atanh(r));
        }
        // ball samples (pulled back from random points of the model ball) lie in the outer polydisc
        for (int k = 0; k < 100; ++k) {
          Point u = (r * std::pow(U(rng), 1.0 / (2 * d.n))) * random_point_in_ball(rng, d.n, 0.5);
          u = (r * U(rng) / std::max(abs(u), 1e-300)) * u;
          Point z = d.from_ball(ball_automorphism(d.to_ball(w), u, d.n));
          CHECK(f.in_outer(z, d.n));
        }
      }
    }
  }
}

TEST_CASE("delta comparability on balls") {
  Rng rng(6);
  auto d = unit_disc();
  std::vector<double> D;
  for (double r : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    double worst = 1;
    for (int k = 0; k < 1000; ++k) {
      Point z = random_point_in_ball(rng, 1, 1e-4);
      double s = std::atanh(r) * std::sqrt(std::uniform_real_distribution<double>(0, 1)(rng));
      Point u{std::tanh(s) * std::polar(1.0, 2 * pi * std::uniform_real_distribution<double>(0, 1)(rng)), 0.0};
      Point w = ball_automorphism(z, u, 1);
      double ratio = delta_of(d, z) / delta_of(d, w);
      worst = std::max({worst, ratio, 1 / ratio});
    }
    D.push_back(worst);
  }
  // fitted D(r) is finite and increasing in r; the exact bound is (1 + r)/(1 - r)
  for (std::size_t i = 0; i < D.size(); ++i) CHECK(std::isfinite(D[i]));
  CHECK(D.back() <= (1 + 0.9) / (1 - 0.9) * 1.0001);
  CHECK(std::is_sorted(D.begin(), D.end()));
}

TEST_CASE("ball volume oracles") {
  auto d = unit_disc();
  auto v0 = ball_volume(d, pt(0.0), 0.5);
  CHECK(v0.value == doctest::Approx(pi * 0.25).epsilon(1e-12));

  auto v = ball_volume(d, pt(0.9), 0.5);
  // Monte Carlo with the membership oracle, 10^7 samples in a box containing the ball
  Rng rng(77);
  std::uniform_real_distribution<double> X(0.7, 1.0), Y(-0.15, 0.15);
  KobayashiBall y{pt(0.9), 0.5};
  const long N = 10000000;
  long hits = 0;
  for (long k = 0; k < N; ++k) {
    Point z = pt(cplx(X(rng), Y(rng)));
    if (ball_membership(d, y, z) == Membership::Inside) ++hits;
  }
  double mc = 0.09 * static_cast<double>(hits) / N;
  CHECK(std::abs(v.value - mc) / mc < 0.01);
  CHECK(v.value == doctest::Approx(ball_volume_closed_form(pt(0.9), 0.5, 1)).epsilon(1e-10));

  double ratio = ball_volume(d, pt(0.9), 0.3).value / ball_volume(d, pt(0.99), 0.3).value;
  CHECK(std::abs(ratio / 100.0 - 1.0) < 0.25);

  auto b = unit_ball();
  Point w = pt(0.5, cplx(0.2, 0.3));
  CHECK(ball_volume(b, w, 0.4).value == doctest::Approx(ball_volume_closed_form(w, 0.4, 2)).epsilon(1e-9));
  auto e = ellipsoid(2, 1.0, 2.0);
  CHECK(ball_volume(e, pt(0.0), 0.5).value == doctest::Approx(ball_volume_closed_form(pt(0.0), 0.5, 2) / 2.0).epsilon(1e-12));
}

TEST_CASE("volume law exponents on disc and ball") {
  for (auto d : {unit_disc(), unit_ball()}) {
    std::vector<double> ld, lv;
    for (int j = 3; j <= 8; ++j) {
      double delta = std::ldexp(1.0, -j);
      ld.push_back(std::log(delta));
      lv.push_back(std::log(ball_volume(d, pt(1.0 - delta), 0.3).value));
    }
    CHECK(std::abs(linear_fit(ld, lv).slope / (d.n + 1) - 1.0) < 0.05);
    std::vector<double> lr, lw;
    for (int k = 3; k <= 7; ++k) {
      double r = std::ldexp(1.0, -k);
      lr.push_back(std::log(r));
      lw.push_back(std::log(ball_volume(d, pt(0.99), r).value));
    }
    CHECK(std::abs(linear_fit(lr, lw).slope / (2 * d.n) - 1.0) < 0.1);
  }
}

TEST_CASE("domain quadrature integrates the constant") {
  auto dq = domain_rule(unit_disc());
  CHECK(dq.total() == doctest::Approx(pi).epsilon(1e-12));
  for (double w : dq.weights) CHECK(w > 0);
  auto bq = domain_rule(unit_ball(), {8, 3, 16, 6, 0.35});
  CHECK(bq.total() == doctest::Approx(pi * pi / 2).epsilon(1e-12));
  auto eq = domain_rule(ellipsoid(2, 1.0, 2.0), {8, 3, 16, 6, 0.35});
  CHECK(eq.total() == doctest::Approx(pi * pi / 4).epsilon(1e-12));
  auto c = custom_domain(1, [](const Point& z) { return std::norm(z[0]) - 1.0; }, {-1, -1, 0, 0}, {1, 1, 0, 0});
  auto cq = domain_rule(c, {8, 1, 256, 4, 0.3});
  CHECK(cq.total() == doctest::Approx(pi).epsilon(5e-3));
  std::ostringstream os;
  dq.write_csv(os);
  CHECK(os.str().rfind("x1,y1,weight\n", 0) == 0);
}

TEST_CASE("covers of the disc") {
  auto d = unit_disc();
  auto nodes = domain_rule(d, {12, 5, 96, 4, 0.35}).nodes;
  auto c = cover_domain(d, 0.5, 0.7, nodes, 0.01);
  CHECK(c.covered);
  CHECK(c.centers.size() > 10);
  CHECK(c.overlap_M >= 1);
  auto coarse = cover_domain(d, 0.9, 0.95, nodes, 0.01);
  CHECK(coarse.covered);
  CHECK(coarse.centers.size() < c.centers.size());
  CHECK(coarse.overlap_M <= 30);
  CHECK_THROWS_AS(cover_domain(d, 0.7, 0.7, nodes, 0.01), BergmanError);
}

TEST_CASE("Vitali selection") {
  auto d = unit_disc();
  double r = 0.2, R = std::tanh(5 * std::atanh(r));
  auto one = vitali_select(d, {pt(0.3)}, r, R);
  REQUIRE(one.selected.size() == 1);
  CHECK(one.selected[0] == 0);
  // two centers closer than 2 atanh(r)
  auto two = vitali_select(d, {pt(0.5), pt(0.55)}, r, R);
  CHECK(two.selected.size() == 1);
  CHECK(two.union_audit);
  CHECK(two.selected[0] == 0);  // larger delta wins
  std::vector<Point> far{pt(0.0), pt(0.9), pt(-0.9), pt(cplx(0, 0.9))};
  CHECK(vitali_select(d, far, r, R).selected.size() == far.size());
  // pairwise disjointness
  Rng rng(1);
  std::vector<Point> cloud;
  for (int k = 0; k < 300; ++k) cloud.push_back(random_point_in_ball(rng, 1, 1e-3));
  auto v = vitali_select(d, cloud, r, R);
  CHECK(v.union_audit);
  for (std::size_t i = 0; i < v.selected.size(); ++i)
    for (std::size_t j = i + 1; j < v.selected.size(); ++j)
      CHECK(kobayashi_exact(d, cloud[v.selected[i]], cloud[v.selected[j]]) >= 2 * std::atanh(r));
}
