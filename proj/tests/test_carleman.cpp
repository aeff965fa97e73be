/**
 * @file test_carleman.cpp
 * @brief Grid regions, Green solves, Carleman weights and inequality, h-optimization, three-sphere bounds.
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bergman/carleman.hpp"

using namespace bergman;

namespace {

std::vector<char> sector_mask(const PlaneRegion& R, double frac) {
  std::vector<char> E(R.size(), 0);
  for (std::size_t k = 0; k < R.size(); ++k) {
    if (!R.Y[k]) continue;
    double a = std::arg(R.z(k));
    if (a < 0) a += 2 * pi;
    E[k] = a < 2 * pi * frac;
  }
  return E;
}

Shape l_shape() { return shape_polygon({{-0.3, -0.3}, {0.3, -0.3}, {0.3, 0.05}, {0.05, 0.05}, {0.05, 0.3}, {-0.3, 0.3}}); }

}  // namespace

TEST_CASE("distance transform matches brute force") {
  const int nx = 23, ny = 17;
  Rng rng(5);
  std::vector<char> f(nx * ny);
  for (auto& v : f) v = std::uniform_real_distribution<double>(0, 1)(rng) < 0.05;
  f[7] = 1;
  auto d = distance_transform(f, nx, ny, 0.5);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      double best = 1e300;
      for (int a = 0; a < nx; ++a)
        for (int b = 0; b < ny; ++b)
          if (f[a * ny + b]) best = std::min(best, std::hypot(i - a, j - b) * 0.5);
      CHECK(d[i * ny + j] == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("build_Z on the disc") {
  auto R = build_Z(shape_disc(0, 0, 0.5), shape_disc(0, 0, 0.125), 0.1, 256);
  CHECK(std::abs(R.diam_Y - 0.25) <= 2.5e-4);
  CHECK(R.map_scale == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(R.y_in_z);
  CHECK(R.separation >= 0.1 - R.hg);
  CHECK(R.exterior_sphere_pass == 1.0);
  // Z is the disc of radius 0.45
  CHECK(R.measure(R.Z) == doctest::Approx(pi * 0.45 * 0.45).epsilon(0.02));
  CHECK_THROWS_AS(build_Z(shape_disc(0, 0, 0.5), shape_disc(0, 0, 0.125), 0.3), BergmanError);
  CHECK_THROWS_AS(build_Z(shape_disc(0, 0, 0.5), shape_disc(0, 0, 0.125), 0.1, 16), BergmanError);
}

TEST_CASE("build_Z rounds reentrant corners and normalizes Y") {
  // X and Y given at a larger scale: the map shrinks by 0.25 / diam(Y) = 0.625 and recenters Y
  auto R = build_Z(shape_affine(l_shape(), 0, 0, 2.0), shape_disc(-0.3, -0.3, 0.2), 0.05, 256);
  CHECK(R.map_scale == doctest::Approx(0.625).epsilon(1e-4));
  CHECK(std::abs(R.diam_Y - 0.25) <= 2.5e-4);
  CHECK(R.exterior_sphere_pass >= 0.95);
  CHECK(R.y_in_z);
  CHECK(R.separation >= 0.05);
  // around the reentrant corner Z is cut by a disc of radius d/2
  double cx = (0.1 - R.map_shift[0]) * R.map_scale, cy = (0.1 - R.map_shift[1]) * R.map_scale;
  int inside_cut = 0;
  for (int i = 0; i < R.nx; ++i)
    for (int j = 0; j < R.ny; ++j) {
      double r = std::hypot(R.x(i) - cx, R.y(j) - cy);
      if (r < 0.025 - R.hg) {
        CHECK_FALSE(R.Z[R.idx(i, j)]);
        ++inside_cut;
      }
    }
  CHECK(inside_cut > 100);
  auto sq = build_Z(shape_rect(-0.4, 0.4, -0.4, 0.4), shape_disc(0, 0, 0.125), 0.05, 256);
  CHECK(sq.exterior_sphere_pass >= 0.95);
  CHECK(sq.y_in_z);
}

TEST_CASE("green solve reproduces the disc Green function") {
  auto R = plane_region(shape_disc(0, 0, 1.0), 512);
  GreenSolver S(R);
  const double eps = 0.05;
  std::vector<double> src(R.size(), 0.0);
  double mass = 0;
  for (std::size_t k = 0; k < R.size(); ++k)
    if (std::abs(R.z(k)) < eps) {
      src[k] = 1;
      mass += R.cell();
    }
  for (auto& v : src) v /= mass;
  auto g = S.solve(src);
  CHECK(g.residual < 1e-8);
  CHECK(g.min_value >= 0);
  double worst = 0;
  for (std::size_t k = 0; k < R.size(); ++k) {
    double r = std::abs(R.z(k));
    if (r > 0.1 && r < 0.7) worst = std::max(worst, std::abs(g.phi[k] / (-std::log(r) / (2 * pi)) - 1));
  }
  CHECK(worst < 0.02);
  auto zero = S.solve(std::vector<double>(R.size(), 0.0));
  CHECK(*std::max_element(zero.phi.begin(), zero.phi.end()) == 0.0);
}

TEST_CASE("discrete minimum principle and comparison") {
  auto R = build_Z(l_shape(), shape_disc(-0.15, -0.15, 0.1), 0.05, 128);
  GreenSolver S(R);
  std::vector<double> chiY(R.size());
  for (std::size_t k = 0; k < R.size(); ++k) chiY[k] = R.Y[k];
  auto g = S.solve(chiY);
  CHECK(g.min_value >= 0);
  for (std::size_t k = 0; k < R.size(); ++k)
    if (R.Z[k]) CHECK(g.phi[k] > 0);
  Rng rng(17);
  std::uniform_real_distribution<double> U(0, 1);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> a(R.size()), b(R.size());
    for (std::size_t k = 0; k < R.size(); ++k) {
      a[k] = U(rng) < 0.1 ? U(rng) : 0;
      b[k] = a[k] + (U(rng) < 0.1 ? U(rng) : 0);
    }
    auto ga = S.solve(a), gb = S.solve(b);
    double worst = 0;
    for (std::size_t k = 0; k < R.size(); ++k) worst = std::min(worst, gb.phi[k] - ga.phi[k]);
    CHECK(worst >= -1e-12);
  }
}

TEST_CASE("green regularity probe") {
  for (const auto& R : {plane_region(shape_disc(0, 0, 0.5), 128), build_Z(shape_rect(-0.4, 0.4, -0.4, 0.4), shape_disc(0, 0, 0.125), 0.05, 128)}) {
    GreenSolver S(R);
    auto P = green_regularity_probe(S, 0.1);
    CHECK(P.inf_pairs > 0);
    CHECK(P.monotone);
    CHECK(P.rows.size() >= 8);
    CHECK_THROWS_AS(green_regularity_probe(S, 2 * R.hg), BergmanError);
  }
  // explicit disc Green function G(x, y) = log(|1 - conj(x) y| / |x - y|) / 2 pi for the pole pair check
  auto R = plane_region(shape_disc(0, 0, 1.0), 256);
  GreenSolver S(R);
  std::size_t k0 = R.idx(R.nx / 2, R.ny / 2);
  auto g = S.point_source(k0);
  cplx y = R.z(k0);
  for (std::size_t k = 0; k < R.size(); k += 97) {
    cplx x = R.z(k);
    if (std::abs(x) > 0.8 || std::abs(x - y) < 0.2) continue;
    double G = std::log(std::abs(1.0 - std::conj(x) * y) / std::abs(x - y)) / (2 * pi);
    CHECK(g.phi[k] == doctest::Approx(G).epsilon(0.03));
  }
}

TEST_CASE("carleman weight invariants and the S growth in log 1/gamma") {
  auto R = build_Z(shape_disc(0, 0, 0.5), shape_disc(0, 0, 0.125), 0.1, 256);
  GreenSolver S(R);
  std::vector<double> gam{1.0, 0.5, 0.25, 1.0 / 16}, Ss, logs;
  double Cfit = 0;
  for (double g : gam) {
    auto E = g == 1.0 ? R.Y : sector_mask(R, g);
    auto w = carleman_weight(S, E);
    CHECK(w.gamma == doctest::Approx(g).epsilon(0.02));
    CHECK(w.inf_Y_phi >= w.c1 / 2 - 1e-12);
    CHECK(w.max_collar_phi <= w.c1 / 4 + 1e-12);
    CHECK(w.nu > 0);
    CHECK(w.residual < 1e-8);
    CHECK(std::abs(w.nu * w.theta - w.delta + w.delta * w.theta) < 1e-15);
    CHECK(w.S <= w.C * w.S_star);
    Ss.push_back(w.S);
    logs.push_back(std::log(1 / w.gamma));
    Cfit = std::max(Cfit, w.C);
  }
  for (std::size_t i = 1; i < Ss.size(); ++i) CHECK(Ss[i] > Ss[i - 1]);  // E = Y is the densest case
  auto fit = linear_fit(logs, Ss);
  CHECK(fit.slope <= Cfit);
  CHECK(fit.slope > 0);
  auto outside = R.Y;
  outside[R.idx(0, 0)] = 1;
  CHECK_THROWS_AS(carleman_weight(S, outside), BergmanError);
}

TEST_CASE("carleman inequality on the grid") {
  auto R = build_Z(shape_disc(0, 0, 0.5), shape_disc(0, 0, 0.125), 0.1, 256);
  GreenSolver S(R);
  auto w = carleman_weight(S, sector_mask(R, 0.25));
  // harmonic weight: rhs vanishes, lhs >= 0
  std::vector<double> lin(R.size());
  for (std::size_t k = 0; k < R.size(); ++k) lin[k] = 0.1 * R.z(k).real();
  for (int k = 0; k < 4; ++k) {
    auto g = cutoff_times(R, w.psi, [k](cplx z) { return std::pow(z, k) + 0.3; });
    auto c = carleman_check(R, lin, 0.1, g);
    CHECK(std::abs(c.rhs) < 1e-10 * c.lhs);
    CHECK(c.lhs >= 0);
  }
  Rng rng(3);
  for (double h : {0.05, 0.1, 0.2})
    for (int k = 0; k < 6; ++k) {
      std::vector<cplx> coef(k + 1);
      for (auto& c : coef) c = complex_gaussian(rng);
      auto g = cutoff_times(R, w.psi, [&](cplx z) {
        cplx s = 0;
        for (std::size_t j = coef.size(); j-- > 0;) s = s * z + coef[j];
        return s;
      });
      auto c = carleman_check(R, w.phi, h, g);
      CHECK(c.slack >= -1e-3 * std::abs(c.rhs));
    }
  // test functions must vanish near the boundary
  std::vector<cplx> bad(R.size(), 1.0);
  CHECK_THROWS_AS(carleman_check(R, w.phi, 0.1, bad), BergmanError);
}

TEST_CASE("two-variable carleman check sums per-variable inequalities") {
  auto R = build_Z(shape_disc(0, 0, 0.5), shape_disc(0, 0, 0.125), 0.1, 48);
  GreenSolver S(R);
  auto w = carleman_weight(S, R.Y);
  auto P = carleman_check_product(R, w.phi, w.phi, w.psi, 0.1, [](cplx a, cplx b) { return 1.0 + a * b + a * a - 0.5 * b; });
  for (const auto& c : P.part) CHECK(c.slack >= -1e-3 * std::abs(c.rhs));
  CHECK(P.sum.slack >= -1e-3 * std::abs(P.sum.rhs));
  CHECK(P.sum.lhs == doctest::Approx(P.part[0].lhs + P.part[1].lhs));
}

TEST_CASE("h optimization") {
  auto a = optimize_h(2.0, 2.0, 3.0, 0.7, 0.2);
  CHECK(std::abs(a.log_G_residual) < 1e-12);
  auto b = optimize_h(1e6, 1.0, 1.0, 1.0, 1.0);
  double G = std::exp(2.0 / b.h0) / b.h0;
  CHECK(G == doctest::Approx(1e6).epsilon(1e-6));
  CHECK(b.theta == 0.5);
  CHECK(b.identity == 0.0);
  CHECK(b.large_h == false);
  CHECK(b.bound == doctest::Approx(2 * std::pow(1.0, 0.5) * std::pow(1e6, 0.5)).epsilon(1e-12));
  // h0 >= 1 branch: C^-theta e^delta B^theta A^{1-theta}
  auto c = optimize_h(1.0, 1.0, 0.01, 0.5, 0.5);
  CHECK(c.large_h);
  CHECK(c.bound == doctest::Approx(std::pow(0.01, -0.5) * std::exp(0.5)).epsilon(1e-12));
  CHECK_THROWS_AS(optimize_h(1.0, 0.0, 1.0, 1.0, 1.0), BergmanError);
}

TEST_CASE("three-sphere estimate") {
  auto R = build_Z(shape_disc(0, 0, 0.5), shape_disc(0, 0, 0.125), 0.1, 128);
  GreenSolver S(R);
  auto E = sector_mask(R, 0.2);
  auto w = carleman_weight(S, E);
  std::vector<std::pair<std::string, std::function<cplx(cplx)>>> ens;
  ens.push_back({"one", [](cplx) { return cplx(1.0); }});
  for (int k = 1; k <= 12; ++k) ens.push_back({"z^" + std::to_string(k), [k](cplx z) { return std::pow(z - 0.05, k); }});
  auto rep = three_sphere_estimate(R, w, E, ens);
  CHECK(rep.violations == 0);
  CHECK(rep.records[0].ratio == doctest::Approx(1.0));
  CHECK(rep.records[0].N == doctest::Approx(0.5 * std::log(R.measure(R.X) / R.measure(R.Y))));
  for (const auto& r : rep.records) CHECK(r.ratio <= r.bound_chain);
}

TEST_CASE("doubling index") {
  auto d = unit_disc();
  Function one = [](const Point&) { return cplx(1.0); };
  CHECK(doubling_index(d, one, pt(0.3), 0.5, 0.9, std::numeric_limits<double>::infinity()).N == doctest::Approx(0.0).scale(1));
  for (int k : {1, 4, 9}) {
    Function f = [k](const Point& z) { return std::pow(z[0], k); };
    CHECK(doubling_index(d, f, pt(0.0), 0.5, 0.9, std::numeric_limits<double>::infinity()).N == doctest::Approx(k * std::log(1.8)).epsilon(1e-9));
    // p = 2 at the origin: ||z^k||^2 on |z| < t is pi t^{2k+2} / (k+1)
    CHECK(doubling_index(d, f, pt(0.0), 0.5, 0.9, 2.0).N == doctest::Approx((k + 1) * std::log(1.8)).epsilon(1e-9));
  }
  auto c = doubling_index(d, one, pt(cplx(0.2, 0.7)), 0.3, 0.8, 2.0);
  CHECK(c.N == doctest::Approx(c.normalization).epsilon(1e-12));
  CHECK(c.N >= 0);
  auto b = doubling_index(unit_ball(), one, pt(0.2, 0.3), 0.3, 0.8, 4.0);
  CHECK(b.N == doctest::Approx(b.normalization).epsilon(1e-12));
  CHECK_THROWS_AS(doubling_index(d, one, pt(0.0), 0.9, 0.5, 2.0), BergmanError);
}
