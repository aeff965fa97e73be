#pragma once

/**
 * @file geometry.hpp
 * @brief Domains, boundary projection, Kobayashi distance and balls, polydisc frames,
 * covers and ball-adapted quadrature.
 */

#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "bergman/common.hpp"
#include "bergman/quadrature.hpp"

namespace bergman {

enum class DomainKind { UnitDisc, UnitBall, Ellipsoid, GridCustom };

inline std::string to_string(DomainKind k) {
  switch (k) {
    case DomainKind::UnitDisc: return "UnitDisc";
    case DomainKind::UnitBall: return "UnitBall";
    case DomainKind::Ellipsoid: return "Ellipsoid";
    case DomainKind::GridCustom: return "GridCustom";
  }
  return "?";
}

using RealVec = std::array<double, 4>;  // (x1, y1, x2, y2)

inline RealVec to_real(const Point& z) { return {z[0].real(), z[0].imag(), z[1].real(), z[1].imag()}; }
inline Point from_real(const RealVec& v) { return {cplx(v[0], v[1]), cplx(v[2], v[3])}; }

/**
 * @brief Bounded domain {rho < 0} in C^n, n in {1, 2}.
 *
 * Ellipsoid is sum_i a_i |z_i|^2 < 1. GridCustom carries an arbitrary defining function.
 */
struct Domain {
  int n = 1;
  DomainKind kind = DomainKind::UnitDisc;
  std::array<double, 2> axes{1.0, 1.0};
  std::function<double(const Point&)> custom_rho;
  RealVec box_lo{-1, -1, -1, -1}, box_hi{1, 1, 1, 1};
  double collar_eps0 = 0.5;
  double band_C = std::numeric_limits<double>::quiet_NaN();
  std::string label;

  bool exact() const { return kind == DomainKind::UnitDisc || kind == DomainKind::UnitBall; }
  bool linear_image_of_ball() const { return kind != DomainKind::GridCustom; }
  int real_dim() const { return 2 * n; }

  double rho(const Point& z) const {
    switch (kind) {
      case DomainKind::UnitDisc: return std::norm(z[0]) - 1.0;
      case DomainKind::UnitBall: return norm2(z) - 1.0;
      case DomainKind::Ellipsoid: return axes[0] * std::norm(z[0]) + (n == 2 ? axes[1] * std::norm(z[1]) : 0.0) - 1.0;
      case DomainKind::GridCustom: return custom_rho(z);
    }
    return 0.0;
  }

  RealVec grad(const Point& z) const {
    RealVec g{0, 0, 0, 0};
    if (kind != DomainKind::GridCustom) {
      double a0 = kind == DomainKind::Ellipsoid ? axes[0] : 1.0;
      double a1 = kind == DomainKind::Ellipsoid ? axes[1] : 1.0;
      g = {2 * a0 * z[0].real(), 2 * a0 * z[0].imag(), 2 * a1 * z[1].real(), 2 * a1 * z[1].imag()};
      if (n == 1) g[2] = g[3] = 0;
      return g;
    }
    const double h = 1e-6;
    RealVec x = to_real(z);
    for (int i = 0; i < real_dim(); ++i) {
      RealVec p = x, m = x;
      p[i] += h;
      m[i] -= h;
      g[i] = (custom_rho(from_real(p)) - custom_rho(from_real(m))) / (2 * h);
    }
    return g;
  }

  bool contains(const Point& z) const { return rho(z) < 0.0; }

  /// Complex-linear map taking the domain onto the unit ball (identity for disc/ball).
  Point to_ball(const Point& z) const {
    if (kind != DomainKind::Ellipsoid) return z;
    return {std::sqrt(axes[0]) * z[0], n == 2 ? std::sqrt(axes[1]) * z[1] : cplx(0)};
  }
  Point from_ball(const Point& v) const {
    if (kind != DomainKind::Ellipsoid) return v;
    return {v[0] / std::sqrt(axes[0]), n == 2 ? v[1] / std::sqrt(axes[1]) : cplx(0)};
  }
  /// Real Jacobian determinant of to_ball.
  double to_ball_jacobian() const {
    if (kind != DomainKind::Ellipsoid) return 1.0;
    return axes[0] * (n == 2 ? axes[1] : 1.0);
  }
  double volume() const {
    double unit = n == 1 ? pi : pi * pi / 2.0;
    if (kind == DomainKind::GridCustom) return std::nan("");
    return unit / to_ball_jacobian();
  }
};

inline double gradnorm(const RealVec& g) { return std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2] + g[3] * g[3]); }

/// Complex normal direction (2 d rho / d conj z_i), unit length.
inline Point complex_normal(const Domain& d, const Point& z) {
  RealVec g = d.grad(z);
  Point v{cplx(g[0], g[1]), cplx(g[2], g[3])};
  double a = abs(v);
  return a > 0 ? (1.0 / a) * v : Point{1.0, 0.0};
}

// ---------------------------------------------------------------------------
// Boundary geometry

struct BoundaryProjection {
  double delta = 0;   ///< Euclidean distance to the boundary
  Point proj{};       ///< nearest boundary point
  bool unique = true; ///< false when several minimizers were found
  double residual = 0;
  bool converged = true;
};

namespace detail {

inline double secular(const Domain& d, const Point& z, double lam) {
  double s = 0;
  for (int i = 0; i < d.n; ++i) {
    double a = d.axes[i];
    s += a * std::norm(z[i]) / ((1 + lam * a) * (1 + lam * a));
  }
  return s - 1.0;
}

inline BoundaryProjection ellipsoid_projection(const Domain& d, const Point& z) {
  BoundaryProjection bp;
  double amax = d.axes[0];
  int imax = 0;
  if (d.n == 2 && d.axes[1] > amax) {
    amax = d.axes[1];
    imax = 1;
  }
  const double lo0 = -1.0 / amax;
  // Degenerate case: the component of largest weight vanishes and the secular function stays negative.
  double lo = lo0 + 1e-15, hi = 0.0;
  if (std::abs(z[imax]) < 1e-300 && secular(d, z, lo) <= 0.0) {
    Point q{};
    double used = 0;
    for (int i = 0; i < d.n; ++i) {
      if (i == imax) continue;
      double a = d.axes[i];
      q[i] = z[i] / (1.0 - a / amax);
      used += a * std::norm(q[i]);
    }
    double rem = std::max(0.0, 1.0 - used);
    q[imax] = std::sqrt(rem / amax);
    bp.proj = q;
    bp.delta = abs(z - q);
    bp.unique = rem <= 1e-14;
    return bp;
  }
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (secular(d, z, mid) > 0)
      lo = mid;
    else
      hi = mid;
  }
  double lam = 0.5 * (lo + hi);
  Point q{};
  for (int i = 0; i < d.n; ++i) q[i] = z[i] / (1 + lam * d.axes[i]);
  bp.proj = q;
  bp.delta = abs(z - q);
  bp.residual = std::abs(d.rho(q));
  return bp;
}

/// Boundary point hit by the ray z + t v, t > 0 (bisection on rho).
inline std::optional<Point> ray_hit(const Domain& d, const Point& z, const Point& v) {
  double t = 1e-3, scale = 0;
  for (int i = 0; i < 4; ++i) scale = std::max(scale, d.box_hi[i] - d.box_lo[i]);
  double hi = 0;
  while (t < 4 * scale) {
    if (d.rho(z + t * v) > 0) {
      hi = t;
      break;
    }
    t *= 1.5;
  }
  if (hi == 0) return std::nullopt;
  double lo = 0;
  for (int it = 0; it < 100; ++it) {
    double m = 0.5 * (lo + hi);
    if (d.rho(z + m * v) > 0)
      hi = m;
    else
      lo = m;
  }
  return z + (0.5 * (lo + hi)) * v;
}

inline BoundaryProjection custom_projection(const Domain& d, const Point& z) {
  const int m = d.real_dim();
  Rng rng(derive_seed(0x5eed, "projection", std::hash<double>{}(z[0].real() * 3.1 + z[0].imag() * 7.3 + z[1].real() * 11.7 + z[1].imag() * 13.9)));
  std::normal_distribution<double> nd;
  RealVec zr = to_real(z);
  std::vector<BoundaryProjection> sols;
  for (int restart = 0; restart < 10; ++restart) {
    Point v{};
    if (restart == 0) {
      RealVec g = d.grad(z);
      double gn = gradnorm(g);
      if (gn > 0) v = (1.0 / gn) * Point{cplx(g[0], g[1]), cplx(g[2], g[3])};
    }
    if (abs(v) == 0) {
      RealVec r{0, 0, 0, 0};
      for (int i = 0; i < m; ++i) r[i] = nd(rng);
      v = from_real(r);
      v = (1.0 / abs(v)) * v;
    }
    auto hit = ray_hit(d, z, v);
    if (!hit) continue;
    RealVec x = to_real(*hit);
    RealVec g = d.grad(*hit);
    double gg = 0, dg = 0;
    for (int i = 0; i < m; ++i) {
      gg += g[i] * g[i];
      dg += (x[i] - zr[i]) * g[i];
    }
    double lam = gg > 0 ? -dg / gg : 0.0;
    auto F = [&](const RealVec& xx, double l, Eigen::VectorXd& out) {
      RealVec gx = d.grad(from_real(xx));
      out.resize(m + 1);
      for (int i = 0; i < m; ++i) out[i] = xx[i] - zr[i] + l * gx[i];
      out[m] = d.rho(from_real(xx));
    };
    Eigen::VectorXd f;
    F(x, lam, f);
    bool ok = false;
    for (int it = 0; it < 60; ++it) {
      double fn = f.norm();
      if (fn < 1e-12) {
        ok = true;
        break;
      }
      Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m + 1, m + 1);
      RealVec gx = d.grad(from_real(x));
      const double h = 1e-5;
      for (int j = 0; j < m; ++j) {
        RealVec p = x, q = x;
        p[j] += h;
        q[j] -= h;
        RealVec gp = d.grad(from_real(p)), gq = d.grad(from_real(q));
        for (int i = 0; i < m; ++i) J(i, j) = (i == j ? 1.0 : 0.0) + lam * (gp[i] - gq[i]) / (2 * h);
        J(m, j) = gx[j];
        J(j, m) = gx[j];
      }
      Eigen::VectorXd step = J.fullPivLu().solve(-f);
      double t = 1.0;
      bool accepted = false;
      for (int bt = 0; bt < 30; ++bt) {
        RealVec xn = x;
        for (int i = 0; i < m; ++i) xn[i] += t * step[i];
        double ln = lam + t * step[m];
        Eigen::VectorXd fn2;
        F(xn, ln, fn2);
        if (fn2.norm() < (1 - 1e-4 * t) * fn) {
          x = xn;
          lam = ln;
          f = fn2;
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) break;
    }
    BoundaryProjection bp;
    bp.proj = from_real(x);
    bp.delta = abs(z - bp.proj);
    bp.residual = f.norm();
    bp.converged = ok || bp.residual < 1e-9;
    if (bp.converged) sols.push_back(bp);
  }
  if (sols.empty()) {
    BoundaryProjection fail;
    fail.converged = false;
    fail.residual = std::numeric_limits<double>::infinity();
    return fail;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < sols.size(); ++i)
    if (sols[i].delta < sols[best].delta) best = i;
  BoundaryProjection out = sols[best];
  for (const auto& s : sols)
    if (std::abs(s.delta - out.delta) < 1e-9 && abs(s.proj - out.proj) > 1e-6) out.unique = false;
  return out;
}

}  // namespace detail

/**
 * @brief Euclidean distance to the boundary and the nearest boundary point.
 * Throws BergmanError when z is outside the domain or the projection search fails.
 */
inline BoundaryProjection boundary_distance(const Domain& d, const Point& z) {
  if (!d.contains(z)) throw BergmanError("boundary_distance: point outside domain");
  BoundaryProjection bp;
  switch (d.kind) {
    case DomainKind::UnitDisc:
    case DomainKind::UnitBall: {
      double r = abs(z);
      bp.delta = 1.0 - r;
      if (r == 0) {
        bp.proj = {1.0, 0.0};
        bp.unique = false;
      } else {
        bp.proj = (1.0 / r) * z;
      }
      return bp;
    }
    case DomainKind::Ellipsoid: return detail::ellipsoid_projection(d, z);
    case DomainKind::GridCustom: {
      bp = detail::custom_projection(d, z);
      if (!bp.converged) throw BergmanError("boundary_distance: projection search did not converge, residual " + std::to_string(bp.residual));
      return bp;
    }
  }
  return bp;
}

inline double delta_of(const Domain& d, const Point& z) { return boundary_distance(d, z).delta; }

// ---------------------------------------------------------------------------
// Automorphisms of the unit ball

/// Involutive automorphism phi_a of the unit ball in C^n with phi_a(0) = a.
inline Point ball_automorphism(const Point& a, const Point& u, int n) {
  if (n == 1) return {(a[0] - u[0]) / (1.0 - std::conj(a[0]) * u[0]), 0.0};
  double a2 = norm2(a);
  cplx ua = inner(u, a);
  cplx den = 1.0 - ua;
  if (a2 == 0) return {-u[0], -u[1]};
  Point P = (ua / a2) * a;
  Point Q = u - P;
  double s = std::sqrt(1.0 - a2);
  Point num = a - P - s * Q;
  return (1.0 / den) * num;
}

/// Real Jacobian of phi_a at u.
inline double ball_automorphism_jacobian(const Point& a, const Point& u, int n) {
  double num = 1.0 - norm2(a);
  double den = std::norm(1.0 - inner(u, a));
  return std::pow(num / den, n + 1);
}

/// Pseudo-hyperbolic distance |phi_z(w)| in the unit ball.
inline double pseudo_distance_ball(const Point& z, const Point& w, int n) {
  if (n == 1) return std::abs(z[0] - w[0]) / std::abs(1.0 - z[0] * std::conj(w[0]));
  return abs(ball_automorphism(z, w, n));
}

// ---------------------------------------------------------------------------
// Kobayashi distance

struct KobayashiDistance {
  double lower = 0, upper = 0;
  bool exact = false;
  double value() const { return 0.5 * (lower + upper); }
};

/// Kobayashi distance on the ball/ellipsoid through the linear map to the ball.
inline double kobayashi_exact(const Domain& d, const Point& z, const Point& w) {
  if (!d.linear_image_of_ball()) throw BergmanError("kobayashi_exact: no closed form for this kind");
  Point a = d.to_ball(z), b = d.to_ball(w);
  // 1 - p^2 in the symmetric form; near the diagonal the automorphism norm is more accurate
  double A = (1.0 - norm2(a)) * (1.0 - norm2(b)) / std::norm(1.0 - inner(a, b));
  if (A > 0.5) return std::atanh(pseudo_distance_ball(a, b, d.n));
  double p = std::sqrt(1.0 - A);
  return std::log1p(p) - 0.5 * std::log(A);
}

/// Box gauge between boundary points p, q with the complex normal nu at p.
inline double box_gauge(const Point& p, const Point& q, const Point& nu) {
  Point diff = p - q;
  cplx c1 = inner(diff, nu);
  Point tang = diff - c1 * nu;
  return std::max(std::sqrt(std::abs(c1)), abs(tang));
}

/// The comparison function 2 log((gauge + max h) / sqrt(h(z) h(w))), h = delta^{1/2}.
inline double balogh_bonk_g(const Domain& d, const Point& z, const Point& w) {
  auto bz = boundary_distance(d, z);
  auto bw = boundary_distance(d, w);
  double hz = std::sqrt(bz.delta), hw = std::sqrt(bw.delta);
  Point nu = complex_normal(d, bz.proj);
  double gauge = box_gauge(bz.proj, bw.proj, nu);
  return 2.0 * std::log((gauge + std::max(hz, hw)) / std::sqrt(hz * hw));
}

/**
 * @brief Band constant: max |d - g| over sampled collar pairs in the unit ball of the same
 * complex dimension. Deterministic for a fixed seed.
 */
inline double calibrate_band_constant(int n, std::uint64_t seed = 7, int pairs = 4000, double eps0 = 0.5) {
  Domain ball;
  ball.n = n;
  ball.kind = n == 1 ? DomainKind::UnitDisc : DomainKind::UnitBall;
  Rng rng(derive_seed(seed, "band-calibration", n));
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto random_dir = [&]() {
    std::normal_distribution<double> nd;
    Point v{cplx(nd(rng), nd(rng)), n == 2 ? cplx(nd(rng), nd(rng)) : cplx(0)};
    return (1.0 / abs(v)) * v;
  };
  double C = 0;
  for (int k = 0; k < pairs; ++k) {
    double d1 = std::exp(std::log(1e-4) + U(rng) * (std::log(eps0) - std::log(1e-4)));
    double d2 = std::exp(std::log(1e-4) + U(rng) * (std::log(eps0) - std::log(1e-4)));
    Point a = (1.0 - d1) * random_dir();
    Point b;
    if (k % 2 == 0) {
      b = (1.0 - d2) * random_dir();
    } else {
      // nearby pair: perturb a on the scale of its polydisc
      Point nu = (1.0 / abs(a)) * a;
      Point t = random_dir();
      t = t - inner(t, nu) * nu;
      double s = std::exp(std::log(0.05) + U(rng) * std::log(40.0));
      b = a + cplx(0, s * d1) * nu + (s * std::sqrt(d1)) * t;
      b = a + (-s * d1) * nu + (b - a);
      if (!ball.contains(b) || 1.0 - abs(b) < 1e-5) continue;
    }
    double exact = kobayashi_exact(ball, a, b);
    double g = balogh_bonk_g(ball, a, b);
    C = std::max(C, std::abs(exact - g));
  }
  return C;
}

/**
 * @brief Kobayashi distance. Exact for disc/ball; for other kinds the band
 * [g - C, g + C] intersected with [0, inf).
 */
inline KobayashiDistance kobayashi_distance(const Domain& d, const Point& z, const Point& w) {
  if (!d.contains(z) || !d.contains(w)) throw BergmanError("kobayashi_distance: point outside domain");
  KobayashiDistance kd;
  if (d.exact()) {
    kd.lower = kd.upper = kobayashi_exact(d, z, w);
    kd.exact = true;
    return kd;
  }
  double C = std::isnan(d.band_C) ? calibrate_band_constant(d.n) : d.band_C;
  double g = balogh_bonk_g(d, z, w);
  kd.lower = std::max(0.0, g - C);
  kd.upper = std::max(0.0, g + C);
  return kd;
}

// ---------------------------------------------------------------------------
// Polydisc frames

/// Unitary taking the complex normal nu to the first coordinate axis.
inline std::array<cplx, 4> frame_unitary(const Point& nu, int n) {
  if (n == 1) return {std::conj(nu[0]), 0.0, 0.0, 1.0};
  return {std::conj(nu[0]), std::conj(nu[1]), -nu[1], nu[0]};
}

inline Point frame_apply(const std::array<cplx, 4>& U, const Point& v) { return {U[0] * v[0] + U[1] * v[1], U[2] * v[0] + U[3] * v[1]}; }

inline Point frame_adjoint(const std::array<cplx, 4>& U, const Point& v) {
  return {std::conj(U[0]) * v[0] + std::conj(U[2]) * v[1], std::conj(U[1]) * v[0] + std::conj(U[3]) * v[1]};
}

struct PolydiscFrame {
  Point center{};
  std::array<cplx, 4> U{1, 0, 0, 1};
  double delta = 0;
  double r = 0;
  double a = 0, b = 0;  ///< inner coefficients: P(0, a delta, b delta^{1/2})
  double A = 0, B = 0;  ///< outer coefficients: P(0, A atanh(r) delta, B atanh(r) delta^{1/2})

  Point local(const Point& z) const { return frame_apply(U, z - center); }
  bool in_inner(const Point& z, int n) const {
    Point l = local(z);
    bool ok = std::abs(l[0]) < a * delta;
    if (n == 2) ok = ok && std::abs(l[1]) < b * std::sqrt(delta);
    return ok;
  }
  bool in_outer(const Point& z, int n) const {
    Point l = local(z);
    double t = std::atanh(r);
    bool ok = std::abs(l[0]) <= A * t * delta;
    if (n == 2) ok = ok && std::abs(l[1]) <= B * t * std::sqrt(delta);
    return ok;
  }
  /// Unitarity defect |U U* - I|_max.
  double unitarity_defect() const {
    std::array<cplx, 4> P{U[0] * std::conj(U[0]) + U[1] * std::conj(U[1]), U[0] * std::conj(U[2]) + U[1] * std::conj(U[3]),
                          U[2] * std::conj(U[0]) + U[3] * std::conj(U[1]), U[2] * std::conj(U[2]) + U[3] * std::conj(U[3])};
    return std::max({std::abs(P[0] - 1.0), std::abs(P[1]), std::abs(P[2]), std::abs(P[3] - 1.0)});
  }
};

/// Points on the boundary sphere of Y(w, r), via the ball automorphism.
inline std::vector<Point> ball_boundary_samples(const Domain& d, const Point& w, double r, int m) {
  std::vector<Point> out;
  Point wb = d.to_ball(w);
  if (d.n == 1) {
    for (int k = 0; k < m; ++k) {
      double t = 2 * pi * (k + 0.5) / m;
      out.push_back(d.from_ball(ball_automorphism(wb, {r * std::polar(1.0, t), 0.0}, 1)));
    }
    return out;
  }
  int mt = std::max(4, static_cast<int>(std::sqrt(static_cast<double>(m))));
  for (int i = 0; i < mt; ++i) {
    double s = (i + 0.5) / mt;  // cos^2 eta
    for (int j = 0; j < mt; ++j)
      for (int k = 0; k < mt; ++k) {
        double t1 = 2 * pi * (j + 0.5) / mt, t2 = 2 * pi * (k + 0.3) / mt;
        Point u{r * std::sqrt(s) * std::polar(1.0, t1), r * std::sqrt(1 - s) * std::polar(1.0, t2)};
        out.push_back(d.from_ball(ball_automorphism(wb, u, 2)));
      }
  }
  return out;
}

/**
 * @brief Fit the frame at w for pseudo-radius r using exact membership
 * (disc, ball, ellipsoid through its linear map to the ball).
 */
inline PolydiscFrame fit_polydisc_frame(const Domain& d, const Point& w, double r, int samples = 512) {
  if (!d.linear_image_of_ball()) throw BergmanError("fit_polydisc_frame: needs an exact membership oracle");
  PolydiscFrame f;
  f.center = w;
  f.r = r;
  auto bp = boundary_distance(d, w);
  f.delta = bp.delta;
  f.U = frame_unitary(complex_normal(d, bp.proj), d.n);
  const double t = std::atanh(r);
  double m1 = 0, m2 = 0;
  for (const auto& z : ball_boundary_samples(d, w, r, samples)) {
    Point l = f.local(z);
    m1 = std::max(m1, std::abs(l[0]));
    m2 = std::max(m2, std::abs(l[1]));
  }
  f.A = 1.001 * m1 / (t * f.delta);
  f.B = d.n == 2 ? 1.001 * m2 / (t * std::sqrt(f.delta)) : 0.0;
  auto inside = [&](const Point& z) { return kobayashi_exact(d, w, z) < t; };
  auto max_along = [&](int axis) {
    double lo = 0, hi = (axis == 0 ? f.A * t * f.delta : f.B * t * std::sqrt(f.delta)) * 1.01;
    for (int it = 0; it < 60; ++it) {
      double mid = 0.5 * (lo + hi);
      bool ok = true;
      for (int k = 0; k < 64 && ok; ++k) {
        Point l{};
        l[axis] = mid * std::polar(1.0, 2 * pi * k / 64.0);
        ok = inside(f.center + frame_adjoint(f.U, l));
      }
      if (ok)
        lo = mid;
      else
        hi = mid;
    }
    return lo;
  };
  double r1 = max_along(0);
  if (d.n == 1) {
    f.a = 0.999 * r1 / f.delta;
    return f;
  }
  double r2 = max_along(1);
  // Y is convex, so the polydisc lies inside iff its distinguished torus does.
  double lo = 0, hi = 1;
  for (int it = 0; it < 50; ++it) {
    double s = 0.5 * (lo + hi);
    bool ok = true;
    for (int j = 0; j < 24 && ok; ++j)
      for (int k = 0; k < 24 && ok; ++k) {
        Point l{s * r1 * std::polar(1.0, 2 * pi * j / 24.0), s * r2 * std::polar(1.0, 2 * pi * (k + 0.5) / 24.0)};
        ok = inside(f.center + frame_adjoint(f.U, l));
      }
    if (ok)
      lo = s;
    else
      hi = s;
  }
  f.a = 0.999 * lo * r1 / f.delta;
  f.b = 0.999 * lo * r2 / std::sqrt(f.delta);
  return f;
}

/// Coefficients a(r), b(r), A, B fitted over a set of centers (minimum inner, maximum outer).
struct FrameConstants {
  double r = 0, a = 0, b = 0, A = 0, B = 0;
};

inline FrameConstants fit_frame_constants(const Domain& d, const std::vector<Point>& centers, double r) {
  FrameConstants fc;
  fc.r = r;
  fc.a = fc.b = std::numeric_limits<double>::infinity();
  for (const auto& w : centers) {
    auto f = fit_polydisc_frame(d, w, r);
    fc.a = std::min(fc.a, f.a);
    fc.b = std::min(fc.b, d.n == 2 ? f.b : 0.0);
    fc.A = std::max(fc.A, f.A);
    fc.B = std::max(fc.B, f.B);
  }
  if (d.n == 1) fc.b = 0;
  return fc;
}

// ---------------------------------------------------------------------------
// Kobayashi balls

struct KobayashiBall {
  Point center{};
  double r = 0.5;  ///< pseudo-radius; Kobayashi radius atanh(r)
  double volume = std::nan("");
  double volume_err = std::nan("");
};

enum class Membership { Inside, Outside, Uncertain };

inline std::string to_string(Membership m) {
  return m == Membership::Inside ? "inside" : (m == Membership::Outside ? "outside" : "uncertain");
}

/**
 * @brief Membership in Y(w, r). Exact on disc/ball; for other kinds the frame sandwich
 * (when supplied) decides first and the distance band second.
 */
inline Membership ball_membership(const Domain& d, const KobayashiBall& ball, const Point& z,
                                  const PolydiscFrame* frame = nullptr) {
  if (!d.contains(z)) return Membership::Outside;
  const double t = std::atanh(ball.r);
  if (d.exact()) return kobayashi_exact(d, ball.center, z) < t ? Membership::Inside : Membership::Outside;
  if (frame) {
    if (frame->in_inner(z, d.n)) return Membership::Inside;
    if (!frame->in_outer(z, d.n)) return Membership::Outside;
  }
  auto kd = kobayashi_distance(d, ball.center, z);
  if (kd.upper < t) return Membership::Inside;
  if (kd.lower >= t) return Membership::Outside;
  return Membership::Uncertain;
}

// ---------------------------------------------------------------------------
// Ball-adapted quadrature

struct PullbackSpec {
  int nr = 24;        ///< radial nodes per panel
  int panels = 1;     ///< radial panels, graded toward the outer radius when it is 1
  int ntheta = 64;    ///< angular nodes (per angle for n = 2)
  int ns = 12;        ///< nodes in cos^2(eta) for n = 2
  double grading = 0.35;
};

/**
 * @brief Quadrature on {w : r_in <= |phi_z(w)| < r_out} (Lebesgue measure in w), built by
 * pulling back a polar rule through the ball automorphism. Requires a linear image of the ball.
 */
inline Quadrature pullback_rule(const Domain& d, const Point& z, double r_in, double r_out, const PullbackSpec& spec = {}) {
  if (!d.linear_image_of_ball()) throw BergmanError("pullback_rule: domain has no automorphism pullback");
  if (!(0 <= r_in && r_in < r_out && r_out <= 1)) throw BergmanError("pullback_rule: need 0 <= r_in < r_out <= 1");
  Quadrature q;
  q.n = d.n;
  q.scheme = QuadScheme::Pullback;
  q.resolution = spec.nr * spec.panels;
  const Point zb = d.to_ball(z);
  const double jac_lin = 1.0 / d.to_ball_jacobian();
  const bool graded = r_out >= 1.0 && spec.panels > 1;
  if (d.n == 1) {
    // radial variable t = |u|^2 so r dr = dt / 2
    Rule1D rr = graded ? graded_gauss(r_in * r_in, 1.0, spec.panels, spec.nr, spec.grading)
                       : composite_gauss(r_in * r_in, r_out * r_out, spec.panels, spec.nr);
    Rule1D th = periodic_rule(spec.ntheta, 0.0);
    q.nodes.reserve(rr.x.size() * th.x.size());
    q.weights.reserve(rr.x.size() * th.x.size());
    for (std::size_t i = 0; i < rr.x.size(); ++i) {
      double rad = std::sqrt(rr.x[i]);
      for (std::size_t j = 0; j < th.x.size(); ++j) {
        Point u{rad * std::polar(1.0, th.x[j]), 0.0};
        Point wb = ball_automorphism(zb, u, 1);
        double wgt = 0.5 * rr.w[i] * th.w[j] * ball_automorphism_jacobian(zb, u, 1) * jac_lin;
        q.add(d.from_ball(wb), wgt);
      }
    }
    return q;
  }
  // n = 2: u = t (sqrt(s) e^{i a}, sqrt(1-s) e^{i b}); dV = t^3 dt (1/2) ds da db; use x = t^2: t^3 dt = x dx / 2
  Rule1D rr = graded ? graded_gauss(r_in * r_in, 1.0, spec.panels, spec.nr, spec.grading)
                     : composite_gauss(r_in * r_in, r_out * r_out, spec.panels, spec.nr);
  Rule1D ss = gauss_on(0.0, 1.0, spec.ns);
  Rule1D th = periodic_rule(spec.ntheta, 0.0);
  Rule1D th2 = periodic_rule(spec.ntheta, 0.37);
  for (std::size_t i = 0; i < rr.x.size(); ++i) {
    double t = std::sqrt(rr.x[i]);
    for (std::size_t k = 0; k < ss.x.size(); ++k) {
      double c = std::sqrt(ss.x[k]), s = std::sqrt(1 - ss.x[k]);
      for (std::size_t a = 0; a < th.x.size(); ++a)
        for (std::size_t b = 0; b < th2.x.size(); ++b) {
          Point u{t * c * std::polar(1.0, th.x[a]), t * s * std::polar(1.0, th2.x[b])};
          Point wb = ball_automorphism(zb, u, 2);
          double wgt = 0.5 * rr.x[i] * rr.w[i] * 0.5 * ss.w[k] * th.w[a] * th2.w[b] * ball_automorphism_jacobian(zb, u, 2) * jac_lin;
          q.add(d.from_ball(wb), wgt);
        }
    }
  }
  return q;
}

/// Quadrature on the whole domain (pullback at the origin, graded toward the boundary).
inline Quadrature domain_rule(const Domain& d, const PullbackSpec& spec = {24, 6, 96, 12, 0.35}) {
  if (d.linear_image_of_ball()) return pullback_rule(d, Point{}, 0.0, 1.0, spec);
  // Masked tensor grid on the bounding box.
  Quadrature q;
  q.n = d.n;
  q.scheme = QuadScheme::TensorGrid;
  int k = spec.ntheta;
  q.resolution = k;
  double cell = 1;
  for (int i = 0; i < d.real_dim(); ++i) cell *= (d.box_hi[i] - d.box_lo[i]) / k;
  std::vector<int> idx(d.real_dim(), 0);
  std::size_t total = 1;
  for (int i = 0; i < d.real_dim(); ++i) total *= static_cast<std::size_t>(k);
  for (std::size_t lin = 0; lin < total; ++lin) {
    std::size_t rem = lin;
    RealVec x{0, 0, 0, 0};
    for (int i = 0; i < d.real_dim(); ++i) {
      x[i] = d.box_lo[i] + (d.box_hi[i] - d.box_lo[i]) * ((rem % k) + 0.5) / k;
      rem /= k;
    }
    Point z = from_real(x);
    if (d.contains(z)) q.add(z, cell);
  }
  return q;
}

/// Volume with error bar.
struct VolumeEstimate {
  double value = 0, error = 0;
};

/**
 * @brief |Y(w, r)|. Pullback quadrature for disc/ball/ellipsoid (error bar from a
 * half-resolution comparison); Monte Carlo with the distance band otherwise.
 */
inline VolumeEstimate ball_volume(const Domain& d, const Point& w, double r, const PullbackSpec& spec = {16, 1, 48, 8, 0.35},
                                  std::uint64_t seed = 11, int mc_samples = 20000) {
  VolumeEstimate v;
  if (d.linear_image_of_ball()) {
    auto q = pullback_rule(d, w, 0.0, r, spec);
    PullbackSpec half = spec;
    half.nr = std::max(2, spec.nr / 2);
    half.ntheta = std::max(4, spec.ntheta / 2);
    half.ns = std::max(2, spec.ns / 2);
    auto qh = pullback_rule(d, w, 0.0, r, half);
    v.value = q.total();
    v.error = std::abs(q.total() - qh.total());
    return v;
  }
  // Box sampling around w, sized from the outer polydisc scale of the ball calibration.
  auto bp = boundary_distance(d, w);
  double t = std::atanh(r);
  double s1 = 4 * t * bp.delta * 2.0, s2 = 4 * t * std::sqrt(bp.delta) * 2.0;
  Rng rng(derive_seed(seed, "ball-volume"));
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  KobayashiBall ball{w, r};
  auto Uw = frame_unitary(complex_normal(d, bp.proj), d.n);
  double in = 0, unc = 0;
  for (int k = 0; k < mc_samples; ++k) {
    Point l{cplx(s1 * U(rng), s1 * U(rng)), d.n == 2 ? cplx(s2 * U(rng), s2 * U(rng)) : cplx(0)};
    Point z = w + frame_adjoint(Uw, l);
    auto m = ball_membership(d, ball, z);
    if (m == Membership::Inside) in += 1;
    if (m == Membership::Uncertain) unc += 1;
  }
  double box = 4 * s1 * s1 * (d.n == 2 ? 4 * s2 * s2 : 1.0);
  double p = (in + 0.5 * unc) / mc_samples;
  v.value = p * box;
  v.error = (0.5 * unc / mc_samples + std::sqrt(p * (1 - p) / mc_samples)) * box;
  if (v.error > 0.1 * v.value) throw BergmanError("ball_volume: error bar exceeds 10% of the value");
  return v;
}

/// Closed-form |Y(w, r)| on the unit ball (any n <= 2), used as an oracle.
inline double ball_volume_closed_form(const Point& w, double r, int n) {
  double a2 = norm2(w);
  double unit = n == 1 ? pi : pi * pi / 2.0;
  return unit * std::pow(r, 2 * n) * std::pow((1 - a2) / (1 - r * r * a2), n + 1);
}

// ---------------------------------------------------------------------------
// Covers

struct Cover {
  std::vector<Point> centers;
  int overlap_M = 0;
  bool covered = true;
  std::size_t uncovered_nodes = 0;
};

/// Pseudo-distance used for covers: exact where available, else the band midpoint.
inline double cover_distance(const Domain& d, const Point& a, const Point& b) {
  if (d.linear_image_of_ball()) return kobayashi_exact(d, a, b);
  return kobayashi_distance(d, a, b).value();
}

/**
 * @brief Greedy net: scan candidate nodes by decreasing delta (index order on ties) and add a
 * center whenever the node is not yet in any Y(w_k, r). Nodes with delta < delta_min are skipped.
 */
inline Cover cover_domain(const Domain& d, double r, double R, const std::vector<Point>& nodes, double delta_min,
                          std::size_t max_centers = 200000) {
  if (!(0 < r && r < R && R < 1)) throw BergmanError("cover_domain: need 0 < r < R < 1");
  const double tr = std::atanh(r), tR = std::atanh(R);
  std::vector<double> del(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) del[i] = delta_of(d, nodes[i]);
  std::vector<std::size_t> order(nodes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return del[a] > del[b]; });
  Cover c;
  std::vector<double> cdel;
  for (std::size_t i : order) {
    if (del[i] < delta_min) continue;
    bool hit = false;
    for (std::size_t k = c.centers.size(); k-- > 0;) {
      // balls of radius tr around centers with much larger delta cannot reach this node
      if (cdel[k] > 50 * del[i] || cdel[k] * 50 < del[i]) continue;
      if (cover_distance(d, c.centers[k], nodes[i]) < tr) {
        hit = true;
        break;
      }
    }
    if (!hit) {
      c.centers.push_back(nodes[i]);
      cdel.push_back(del[i]);
      if (c.centers.size() > max_centers) throw BergmanError("cover_domain: atom budget exceeded");
    }
  }
  // audit coverage and overlap
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (del[i] < delta_min) continue;
    int cnt = 0;
    bool cov = false;
    for (std::size_t k = 0; k < c.centers.size(); ++k) {
      if (cdel[k] > 50 * del[i] || cdel[k] * 50 < del[i]) continue;
      double dist = cover_distance(d, c.centers[k], nodes[i]);
      if (dist < tr) cov = true;
      if (dist < tR) ++cnt;
    }
    if (!cov) ++c.uncovered_nodes;
    c.overlap_M = std::max(c.overlap_M, cnt);
  }
  c.covered = c.uncovered_nodes == 0;
  return c;
}

struct VitaliResult {
  std::vector<std::size_t> selected;
  bool disjoint = true;
  bool union_audit = true;
  std::size_t audit_samples = 0;
};

/**
 * @brief Greedy Vitali selection: decreasing delta, index ascending on ties; a center is kept
 * when its r-ball is disjoint from all kept r-balls. The union audit checks that every r-ball
 * lies in some kept R-ball (triangle inequality certificate plus sampled boundary points).
 */
inline VitaliResult vitali_select(const Domain& d, const std::vector<Point>& centers, double r, double R, int audit_points = 8) {
  const double tr = std::atanh(r), tR = std::atanh(R);
  std::vector<double> del(centers.size());
  for (std::size_t i = 0; i < centers.size(); ++i) del[i] = delta_of(d, centers[i]);
  std::vector<std::size_t> order(centers.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return del[a] > del[b]; });
  // delta ratio bound for points within Kobayashi distance 2 tr + tR, used to prune
  const double prune = std::exp(2.0 * (2 * tr + tR)) * 4.0;
  VitaliResult v;
  for (std::size_t i : order) {
    bool ok = true;
    for (std::size_t s : v.selected) {
      if (del[s] > prune * del[i] || del[i] > prune * del[s]) continue;
      if (cover_distance(d, centers[s], centers[i]) < 2 * tr) {
        ok = false;
        break;
      }
    }
    if (ok) v.selected.push_back(i);
  }
  for (std::size_t i = 0; i < centers.size(); ++i) {
    bool contained = false;
    std::size_t host = 0;
    for (std::size_t s : v.selected) {
      if (del[s] > prune * del[i] || del[i] > prune * del[s]) continue;
      if (cover_distance(d, centers[s], centers[i]) + tr <= tR) {
        contained = true;
        host = s;
        break;
      }
    }
    if (!contained) {
      v.union_audit = false;
      continue;
    }
    if (d.linear_image_of_ball() && audit_points > 0 && i % 7 == 0) {
      for (const auto& p : ball_boundary_samples(d, centers[i], r * 0.999, audit_points)) {
        ++v.audit_samples;
        if (kobayashi_exact(d, centers[host], p) >= tR) v.union_audit = false;
      }
    }
  }
  return v;
}

/// Collar threshold: largest eps with |grad rho| >= half its boundary minimum on {delta < eps}.
inline double fit_collar_threshold(const Domain& d, int samples = 2000, std::uint64_t seed = 3) {
  if (d.exact()) return 0.5;
  Rng rng(derive_seed(seed, "collar"));
  std::uniform_real_distribution<double> U(0, 1);
  double gmin = std::numeric_limits<double>::infinity();
  std::vector<Point> interior;
  for (int k = 0; k < samples; ++k) {
    RealVec x{0, 0, 0, 0};
    for (int i = 0; i < d.real_dim(); ++i) x[i] = d.box_lo[i] + (d.box_hi[i] - d.box_lo[i]) * U(rng);
    Point z = from_real(x);
    if (!d.contains(z)) continue;
    interior.push_back(z);
    auto bp = boundary_distance(d, z);
    gmin = std::min(gmin, gradnorm(d.grad(bp.proj)));
  }
  double eps = std::numeric_limits<double>::infinity();
  double dmax = 0;
  for (const auto& z : interior) {
    double dl = delta_of(d, z);
    dmax = std::max(dmax, dl);
    if (gradnorm(d.grad(z)) < 0.5 * gmin) eps = std::min(eps, dl);
  }
  return std::isinf(eps) ? dmax : eps;
}

// ---------------------------------------------------------------------------
// Factories

inline Domain unit_disc() {
  Domain d;
  d.n = 1;
  d.kind = DomainKind::UnitDisc;
  d.box_lo = {-1, -1, 0, 0};
  d.box_hi = {1, 1, 0, 0};
  d.label = "unit-disc";
  return d;
}

inline Domain unit_ball() {
  Domain d;
  d.n = 2;
  d.kind = DomainKind::UnitBall;
  d.label = "unit-ball";
  return d;
}

inline Domain ellipsoid(int n, double a1, double a2 = 1.0) {
  if (a1 <= 0 || a2 <= 0) throw BergmanError("ellipsoid: axis weights must be positive");
  Domain d;
  d.n = n;
  d.kind = DomainKind::Ellipsoid;
  d.axes = {a1, a2};
  double r1 = 1 / std::sqrt(a1), r2 = 1 / std::sqrt(a2);
  d.box_lo = {-r1, -r1, n == 2 ? -r2 : 0, n == 2 ? -r2 : 0};
  d.box_hi = {r1, r1, n == 2 ? r2 : 0, n == 2 ? r2 : 0};
  d.label = "ellipsoid";
  d.collar_eps0 = 0.5 * std::min(r1, n == 2 ? r2 : r1);
  return d;
}

inline Domain custom_domain(int n, std::function<double(const Point&)> rho, RealVec lo, RealVec hi, std::string label = "custom") {
  Domain d;
  d.n = n;
  d.kind = DomainKind::GridCustom;
  d.custom_rho = std::move(rho);
  d.box_lo = lo;
  d.box_hi = hi;
  d.label = std::move(label);
  return d;
}

}  // namespace bergman
