#pragma once

/**
 * @file density.hpp
 * @brief Candidate sets E, relative-density scans over Kobayashi balls, Berezin transforms of
 * indicators, kernel tails and Toeplitz lower bounds.
 */

#include <ostream>

#include "bergman/kernels.hpp"

namespace bergman {

// ---------------------------------------------------------------------------
// Curves

enum class CurveKind { PolynomialPath, Circle, Segment };

/// C^1 curve t in [0, 1] -> C (n = 1).
struct Curve {
  CurveKind kind = CurveKind::Segment;
  std::vector<cplx> coef;        ///< PolynomialPath: sum_k coef[k] t^k
  cplx a = 0, b = 0;             ///< Segment endpoints; Circle center in a
  double radius = 0, t0 = 0, t1 = 2 * pi;

  cplx operator()(double t) const {
    switch (kind) {
      case CurveKind::PolynomialPath: {
        cplx s = 0;
        for (std::size_t k = coef.size(); k-- > 0;) s = s * t + coef[k];
        return s;
      }
      case CurveKind::Circle: return a + std::polar(radius, t0 + (t1 - t0) * t);
      case CurveKind::Segment: return a + t * (b - a);
    }
    return 0;
  }
  cplx derivative(double t) const {
    switch (kind) {
      case CurveKind::PolynomialPath: {
        cplx s = 0;
        for (std::size_t k = coef.size(); k-- > 1;) s = s * t + static_cast<double>(k) * coef[k];
        return s;
      }
      case CurveKind::Circle: return cplx(0, 1) * (t1 - t0) * std::polar(radius, t0 + (t1 - t0) * t);
      case CurveKind::Segment: return b - a;
    }
    return 0;
  }
};

inline Curve segment(cplx a, cplx b) {
  Curve c;
  c.kind = CurveKind::Segment;
  c.a = a;
  c.b = b;
  return c;
}

inline Curve circle(cplx center, double radius, double t0 = 0, double t1 = 2 * pi) {
  Curve c;
  c.kind = CurveKind::Circle;
  c.a = center;
  c.radius = radius;
  c.t0 = t0;
  c.t1 = t1;
  return c;
}

inline Curve polynomial_path(std::vector<cplx> coef) {
  Curve c;
  c.kind = CurveKind::PolynomialPath;
  c.coef = std::move(coef);
  return c;
}

namespace detail {
inline double gl32_length(const Curve& c, double a, double b) {
  auto r = gauss_on(a, b, 32);
  double s = 0;
  for (std::size_t i = 0; i < r.x.size(); ++i) s += r.w[i] * std::abs(c.derivative(r.x[i]));
  return s;
}
inline void adaptive_arc(const Curve& c, double a, double b, int depth, Quadrature& out) {
  double m = 0.5 * (a + b);
  double whole = gl32_length(c, a, b), halves = gl32_length(c, a, m) + gl32_length(c, m, b);
  if (depth < 24 && std::abs(whole - halves) > 1e-13 * std::max(1.0, halves)) {
    adaptive_arc(c, a, m, depth + 1, out);
    adaptive_arc(c, m, b, depth + 1, out);
    return;
  }
  auto r = gauss_on(a, b, 32);
  for (std::size_t i = 0; i < r.x.size(); ++i) out.add({c(r.x[i]), 0.0}, r.w[i] * std::abs(c.derivative(r.x[i])));
}
}  // namespace detail

/// Arc-length rule on [a, b] of the parameter: Gauss-Legendre 32 per piece, split adaptively.
inline Quadrature arc_length_rule(const Curve& c, double a = 0, double b = 1) {
  Quadrature q;
  q.n = 1;
  q.scheme = QuadScheme::TensorGrid;
  if (b > a) detail::adaptive_arc(c, a, b, 0, q);
  return q;
}

/**
 * @brief Arc-length rule on {t : inside(c(t))}: transitions located on a 512-point scan and
 * refined by bisection.
 */
inline Quadrature arc_length_rule_where(const Curve& c, const std::function<bool(const Point&)>& inside, int scan = 512) {
  Quadrature q;
  q.n = 1;
  auto in = [&](double t) { return inside({c(t), 0.0}); };
  auto refine = [&](double lo, double hi, bool lo_in) {
    for (int it = 0; it < 60; ++it) {
      double m = 0.5 * (lo + hi);
      if (in(m) == lo_in)
        lo = m;
      else
        hi = m;
    }
    return 0.5 * (lo + hi);
  };
  double start = 0;
  bool cur = in(0.0);
  for (int k = 1; k <= scan; ++k) {
    double t = static_cast<double>(k) / scan;
    bool v = in(t);
    if (v != cur) {
      double cut = refine(static_cast<double>(k - 1) / scan, t, cur);
      if (cur) {
        auto piece = arc_length_rule(c, start, cut);
        q.nodes.insert(q.nodes.end(), piece.nodes.begin(), piece.nodes.end());
        q.weights.insert(q.weights.end(), piece.weights.begin(), piece.weights.end());
      }
      start = cut;
      cur = v;
    }
  }
  if (cur) {
    auto piece = arc_length_rule(c, start, 1.0);
    q.nodes.insert(q.nodes.end(), piece.nodes.begin(), piece.nodes.end());
    q.weights.insert(q.weights.end(), piece.weights.begin(), piece.weights.end());
  }
  return q;
}

// ---------------------------------------------------------------------------
// Region sets

enum class RegionKind { Predicate, CurveUnion, PointCloud };

/// Candidate set E: membership predicate, finite union of curves, or finite point set.
struct RegionSet {
  RegionKind kind = RegionKind::Predicate;
  std::string name;
  std::function<bool(const Point&)> predicate;
  std::vector<Curve> curves;
  std::vector<Point> points;
  double nu = 2;  ///< 2: area, 1: length, 0: counting (n = 1)

  bool contains(const Point& z) const {
    if (kind == RegionKind::Predicate) return predicate(z);
    return false;
  }
};

inline RegionSet whole_domain(const Domain& d) {
  RegionSet e;
  e.name = "domain";
  e.predicate = [d](const Point& z) { return d.contains(z); };
  return e;
}

inline RegionSet empty_set() {
  RegionSet e;
  e.name = "empty";
  e.predicate = [](const Point&) { return false; };
  return e;
}

/// {r0 < |z| < r1} (|z| is the Euclidean norm in C^n).
inline RegionSet annulus(double r0, double r1 = 1.0) {
  RegionSet e;
  e.name = "annulus";
  e.predicate = [r0, r1](const Point& z) {
    double a = abs(z);
    return a > r0 && a < r1;
  };
  return e;
}

/// {Re <z, v> > c} for a unit vector v.
inline RegionSet halfspace(Point v, double c = 0.0) {
  RegionSet e;
  e.name = "halfspace";
  e.predicate = [v, c](const Point& z) { return std::real(inner(z, v)) > c; };
  return e;
}

/// Union of axis-parallel cells [x0, x1] x [y0, y1] in the first coordinate.
inline RegionSet cells(std::vector<std::array<double, 4>> boxes) {
  RegionSet e;
  e.name = "cells";
  e.predicate = [boxes](const Point& z) {
    for (const auto& b : boxes)
      if (z[0].real() >= b[0] && z[0].real() <= b[1] && z[0].imag() >= b[2] && z[0].imag() <= b[3]) return true;
    return false;
  };
  return e;
}

/// Complement of E within the domain.
inline RegionSet complement(const Domain& d, const RegionSet& e) {
  RegionSet c;
  c.name = "complement-" + e.name;
  c.predicate = [d, e](const Point& z) { return d.contains(z) && !e.contains(z); };
  return c;
}

inline RegionSet curve_union(std::vector<Curve> curves, std::string name = "curves") {
  RegionSet e;
  e.kind = RegionKind::CurveUnion;
  e.name = std::move(name);
  e.curves = std::move(curves);
  e.nu = 1;
  return e;
}

inline RegionSet point_cloud(std::vector<Point> pts, std::string name = "points") {
  RegionSet e;
  e.kind = RegionKind::PointCloud;
  e.name = std::move(name);
  e.points = std::move(pts);
  e.nu = 0;
  return e;
}

// ---------------------------------------------------------------------------
// Center grids

/**
 * @brief Centers approaching the boundary geometrically: delta = 2^-j, j in [jmin, jmax], along
 * `rays` seeded random directions plus any extra directions supplied.
 */
inline std::vector<Point> collar_centers(const Domain& d, int rays, int jmin, int jmax, std::uint64_t seed,
                                         const std::vector<Point>& extra_dirs = {}) {
  if (!d.linear_image_of_ball()) throw BergmanError("collar_centers: needs a disc, ball or ellipsoid");
  std::vector<Point> dirs = extra_dirs;
  Rng rng(derive_seed(seed, "collar-rays"));
  std::normal_distribution<double> nd;
  for (int k = 0; k < rays; ++k) {
    Point v{cplx(nd(rng), nd(rng)), d.n == 2 ? cplx(nd(rng), nd(rng)) : cplx(0)};
    dirs.push_back((1.0 / abs(v)) * v);
  }
  std::vector<Point> out;
  for (const auto& v : dirs) {
    Point vb = d.to_ball(v);
    vb = (1.0 / abs(vb)) * vb;
    for (int j = jmin; j <= jmax; ++j) {
      // boundary point along the ray, then move inward to Euclidean distance 2^-j along the normal
      Point p = d.from_ball(vb);
      Point nu = complex_normal(d, p);
      Point z = p - std::ldexp(1.0, -j) * nu;
      if (d.contains(z)) out.push_back(z);
    }
  }
  return out;
}

inline int default_rays(const Domain& d) { return d.n == 1 ? 16 : 48; }

// ---------------------------------------------------------------------------
// Relative density

struct DensityRow {
  Point center{};
  double delta = 0, ratio = 0, stderr_ = 0;
  long samples = 0;
};

struct DensityReport {
  std::vector<DensityRow> rows;
  double infimum = 1;
  std::size_t argmin = 0;
  double ci_lo = 0, ci_hi = 0;  ///< bootstrap interval for the infimum

  void write_csv(std::ostream& os) const {
    os << "center_re,center_im,center2_re,center2_im,delta,ratio,stderr\n";
    os.precision(12);
    for (const auto& r : rows)
      os << r.center[0].real() << ',' << r.center[0].imag() << ',' << r.center[1].real() << ',' << r.center[1].imag() << ','
         << r.delta << ',' << r.ratio << ',' << r.stderr_ << '\n';
  }
};

struct DensityOptions {
  long samples = 4000;        ///< initial Monte Carlo samples per center
  long max_samples = 256000;  ///< refinement budget per center
  double target_stderr = 0.01;
  std::uint64_t seed = 1;
  int bootstrap = 200;
};

/// Uniform point in the model ball of radius r (n = 1 or 2).
inline Point uniform_in_ball(Rng& rng, int n, double r) {
  std::uniform_real_distribution<double> U(0, 1);
  std::normal_distribution<double> nd;
  Point v{cplx(nd(rng), nd(rng)), n == 2 ? cplx(nd(rng), nd(rng)) : cplx(0)};
  double rad = r * std::pow(U(rng), 1.0 / (2 * n));
  return (rad / abs(v)) * v;
}

/// Parametric bootstrap of min_i ratio_i with per-center standard errors.
inline std::pair<double, double> bootstrap_infimum(const std::vector<double>& ratio, const std::vector<double>& se, int B, std::uint64_t seed) {
  if (ratio.empty()) return {0, 0};
  Rng rng(derive_seed(seed, "bootstrap"));
  std::normal_distribution<double> nd;
  std::vector<double> mins;
  for (int b = 0; b < B; ++b) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ratio.size(); ++i) m = std::min(m, ratio[i] + se[i] * nd(rng));
    mins.push_back(m);
  }
  return {percentile(mins, 0.025), percentile(mins, 0.975)};
}

/**
 * @brief |E cap Y(z, r)| / |Y(z, r)| per center, by self-normalized importance sampling in the
 * automorphism coordinates (u uniform in the model ball, weight = Jacobian). The sample count is
 * doubled until the delta-method standard error meets the target; exceeding the budget throws.
 */
inline DensityReport relative_density(const Domain& d, const RegionSet& E, double r, const std::vector<Point>& centers,
                                      const DensityOptions& opt = {}) {
  if (!(r > 0 && r < 1)) throw BergmanError("relative_density: r must lie in (0, 1)");
  if (!d.linear_image_of_ball()) throw BergmanError("relative_density: needs a disc, ball or ellipsoid");
  if (E.kind != RegionKind::Predicate) throw BergmanError("relative_density: area density needs a predicate set");
  DensityReport rep;
  rep.rows.resize(centers.size());
  parallel_for(centers.size(), [&](std::size_t i) {
    const Point& z = centers[i];
    Point zb = d.to_ball(z);
    Rng rng(derive_seed(opt.seed, "density", i));
    double sw = 0, sw2 = 0, swe = 0, swe2 = 0, swwe = 0;
    long n = 0, target = opt.samples;
    DensityRow row;
    row.center = z;
    row.delta = delta_of(d, z);
    for (;;) {
      for (; n < target; ++n) {
        Point u = uniform_in_ball(rng, d.n, r);
        Point w = d.from_ball(ball_automorphism(zb, u, d.n));
        double J = ball_automorphism_jacobian(zb, u, d.n);
        double e = E.contains(w) ? 1.0 : 0.0;
        sw += J;
        sw2 += J * J;
        swe += J * e;
        swe2 += J * J * e;
        swwe += J * J * e;
      }
      double R = swe / sw;
      // delta method for a ratio of means
      double nn = static_cast<double>(n);
      double mx = swe / nn, my = sw / nn;
      double vx = swe2 / nn - mx * mx, vy = sw2 / nn - my * my, cxy = swwe / nn - mx * my;
      double var = (vx - 2 * R * cxy + R * R * vy) / (my * my * nn);
      row.ratio = R;
      row.stderr_ = std::sqrt(std::max(0.0, var));
      row.samples = n;
      if (row.stderr_ <= opt.target_stderr) break;
      if (target >= opt.max_samples) throw BergmanError("relative_density: sampling budget exhausted before the error target");
      target = std::min(2 * target, opt.max_samples);
    }
    rep.rows[i] = row;
  });
  std::vector<double> ratio, se;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    ratio.push_back(rep.rows[i].ratio);
    se.push_back(rep.rows[i].stderr_);
    if (rep.rows[i].ratio < rep.rows[rep.argmin].ratio) rep.argmin = i;
  }
  rep.infimum = rep.rows.empty() ? 1.0 : rep.rows[rep.argmin].ratio;
  std::tie(rep.ci_lo, rep.ci_hi) = bootstrap_infimum(ratio, se, opt.bootstrap, opt.seed);
  return rep;
}

// ---------------------------------------------------------------------------
// Berezin transforms and tails

inline PullbackSpec berezin_rule_spec(int n) { return n == 1 ? PullbackSpec{16, 8, 256, 8, 0.4} : PullbackSpec{10, 5, 32, 8, 0.4}; }

namespace detail {

/**
 * @brief Integral of a nonnegative g(u) over r_in <= |u| < r_out split by membership of phi(u) in E.
 * Along every radial line (variable x = |u|^2) membership transitions are located by bisection and
 * each piece gets its own Gauss rule, so the indicator carries no staircase error radially. For
 * n = 1, angular cells where the transition pattern changes between neighboring rays are refined by
 * ternary subdivision;
 * one ray sits at angle `theta0`.
 */
template <class G, class Inside>
std::pair<double, double> masked_polar_integral(int n, double r_in, double r_out, const PullbackSpec& spec, G&& g, Inside&& inside,
                                                double theta0 = 0.0) {
  const double x0 = r_in * r_in, x1 = r_out * r_out;
  const auto cuts = (r_out >= 1.0 && spec.panels > 1) ? graded_cuts(x0, x1, spec.panels, spec.grading) : uniform_cuts(x0, x1, std::max(1, spec.panels));
  const Rule1D& gl = gauss_legendre(spec.nr);
  // radial integral along the direction e (|e| = 1): returns (in, all), dx measure with x^{n-1}/2
  auto ray = [&](const Point& e, int* status) {
    auto at = [&](double x) { return std::sqrt(x) * e; };
    std::vector<double> pts;
    std::vector<char> mem;
    // membership scan 8x finer than the Gauss nodes so thin slivers are not skipped
    const int fine = 8 * static_cast<int>(gl.x.size());
    // the inner endpoint is a scan point too, so sets shrinking onto the center are seen
    pts.push_back(x0);
    mem.push_back(inside(at(x0)) ? 1 : 0);
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
      for (int i = 0; i < fine; ++i) {
        double x = cuts[k] + (cuts[k + 1] - cuts[k]) * (i + 0.5) / fine;
        pts.push_back(x);
        mem.push_back(inside(at(x)) ? 1 : 0);
      }
    std::vector<double> brk(cuts.begin(), cuts.end());
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
      if (mem[i] != mem[i + 1]) {
        double lo = pts[i], hi = pts[i + 1];
        for (int it = 0; it < 60; ++it) {
          double mid = 0.5 * (lo + hi);
          ((inside(at(mid)) ? 1 : 0) == mem[i] ? lo : hi) = mid;
        }
        brk.push_back(0.5 * (lo + hi));
      }
    std::sort(brk.begin(), brk.end());
    double in = 0, all = 0;
    for (std::size_t k = 0; k + 1 < brk.size(); ++k) {
      double a = brk[k], b = brk[k + 1];
      if (!(b > a)) continue;
      double s = 0;
      for (std::size_t i = 0; i < gl.x.size(); ++i) {
        double x = a + (b - a) * 0.5 * (gl.x[i] + 1);
        s += 0.5 * (b - a) * gl.w[i] * 0.5 * std::pow(x, n - 1) * g(at(x));
      }
      all += s;
      if (inside(at(0.5 * (a + b)))) in += s;
    }
    if (status) *status = static_cast<int>(2 * (brk.size() - cuts.size()) + (mem.empty() ? 0 : mem.front()));
    return std::pair<double, double>{in, all};
  };
  double in = 0, all = 0;
  if (n == 1) {
    const int nt = spec.ntheta;
    const double h = 2 * pi / nt;
    std::vector<std::pair<double, double>> v(nt);
    std::vector<int> st(nt);
    for (int j = 0; j < nt; ++j) v[j] = ray(Point{std::polar(1.0, theta0 + j * h), 0.0}, &st[j]);
    // mixed cells: ternary subdivision keeps the center ray as a node at every level
    // lo/hi: signatures of the nearest rays outside the cell on either side
    std::function<void(double, double, int, int, std::pair<double, double>, int, int)> cell =
        [&](double c, double w, int depth, int sc, std::pair<double, double> vc, int lo, int hi) {
          int sl = 0, sr = 0;
          auto vl = ray(Point{std::polar(1.0, c - w / 3), 0.0}, &sl);
          auto vr = ray(Point{std::polar(1.0, c + w / 3), 0.0}, &sr);
          const double sub = w / 3;
          auto leaf = [&](double cc, int s_, int nl, int nr_, std::pair<double, double> v) {
            if (depth < 6 && (nl != s_ || nr_ != s_))
              cell(cc, sub, depth + 1, s_, v, nl, nr_);
            else {
              in += sub * v.first;
              all += sub * v.second;
            }
          };
          leaf(c - sub, sl, lo, sc, vl);
          leaf(c, sc, sl, sr, vc);
          leaf(c + sub, sr, sc, hi, vr);
        };
    for (int j = 0; j < nt; ++j) {
      int l = st[(j + nt - 1) % nt], r = st[(j + 1) % nt];
      if (l != st[j] || r != st[j])
        cell(theta0 + j * h, h, 0, st[j], v[j], l, r);
      else {
        in += h * v[j].first;
        all += h * v[j].second;
      }
    }
    return {in, all};
  }
  Rule1D ss = gauss_on(0.0, 1.0, spec.ns);
  Rule1D th = periodic_rule(spec.ntheta, 0.0), th2 = periodic_rule(spec.ntheta, 0.37);
  for (std::size_t k = 0; k < ss.x.size(); ++k) {
    double c = std::sqrt(ss.x[k]), s = std::sqrt(1 - ss.x[k]);
    for (std::size_t a = 0; a < th.x.size(); ++a)
      for (std::size_t b = 0; b < th2.x.size(); ++b) {
        auto w = ray(Point{c * std::polar(1.0, th.x[a]), s * std::polar(1.0, th2.x[b])}, nullptr);
        double wt = 0.5 * ss.w[k] * th.w[a] * th2.w[b];
        in += wt * w.first;
        all += wt * w.second;
      }
  }
  return {in, all};
}

/// Integral of |K(., z)|^p |rho|^alpha over Omega, split by membership of w = phi_z(u) in {u : sel(u, w)}.
template <class Sel>
std::pair<double, double> kernel_mass(const KernelModel& m, const Point& z, double p, double alpha, const PullbackSpec& spec, Sel&& sel) {
  const Domain& d = m.domain;
  const Point zb = d.to_ball(z);
  const double jl = 1.0 / d.to_ball_jacobian();
  auto map = [&](const Point& u) { return d.from_ball(ball_automorphism(zb, u, d.n)); };
  auto g = [&](const Point& u) {
    Point w = map(u);
    return jl * ball_automorphism_jacobian(zb, u, d.n) * std::pow(std::abs(m(w, z)), p) * weight(d, w, alpha);
  };
  auto inside = [&](const Point& u) { return sel(u, map(u)); };
  // points far from z are compressed toward the direction of z in the u coordinates
  return masked_polar_integral(d.n, 0.0, 1.0, spec, g, inside, std::arg(zb[0]));
}

}  // namespace detail

/**
 * @brief T_E^{p,alpha}(z) = ||k_z^{p,alpha}||_{L^p_alpha(E)}, on the pullback rule about z with the
 * indicator of E masked on nodes; the normalizer is integrated on the same rule.
 */
inline double berezin_indicator(const KernelModel& m, const RegionSet& E, const Point& z, double p, double alpha,
                                std::optional<PullbackSpec> spec = std::nullopt) {
  SpaceParams{p, alpha}.validate();
  if (E.kind != RegionKind::Predicate) throw BergmanError("berezin_indicator: predicate set required");
  if (std::isinf(p)) throw BergmanError("berezin_indicator: use berezin_indicator_sup for p = infinity");
  auto [in, all] = detail::kernel_mass(m, z, p, alpha, spec ? *spec : berezin_rule_spec(m.domain.n),
                                       [&](const Point&, const Point& w) { return E.contains(w); });
  if (!(all > 0)) throw BergmanError("berezin_indicator: quadrature failure");
  return std::pow(in / all, 1.0 / p);
}

/// p = infinity variant: sup_E |K(., z)| / sup_Omega |K(., z)| on a collar-refined pullback grid.
inline double berezin_indicator_sup(const KernelModel& m, const RegionSet& E, const Point& z) {
  auto q = pullback_rule(m.domain, z, 0.0, 1.0, PullbackSpec{8, 12, 128, 6, 0.35});
  double se = 0, sa = 0;
  for (const auto& w : q.nodes) {
    double v = std::abs(m(w, z));
    sa = std::max(sa, v);
    if (E.contains(w)) se = std::max(se, v);
  }
  return se / sa;
}

struct BerezinScan {
  std::vector<Point> centers;
  std::vector<double> delta, value;
  double infimum = 1;
  std::size_t argmin = 0;
};

inline BerezinScan berezin_infimum(const KernelModel& m, const RegionSet& E, double p, double alpha, const std::vector<Point>& centers,
                                   std::optional<PullbackSpec> spec = std::nullopt) {
  BerezinScan s;
  s.centers = centers;
  s.value = parallel_map<double>(centers.size(), [&](std::size_t i) { return berezin_indicator(m, E, centers[i], p, alpha, spec); });
  for (const auto& c : centers) s.delta.push_back(delta_of(m.domain, c));
  for (std::size_t i = 0; i < s.value.size(); ++i)
    if (s.value[i] < s.value[s.argmin]) s.argmin = i;
  s.infimum = s.value.empty() ? 1.0 : s.value[s.argmin];
  return s;
}

/**
 * @brief ||k_z^{p,alpha}||_{L^p_alpha(Omega \ Y(z, r))}: the shell r <= |u| < 1 of the pullback
 * rule, normalized by the full-domain integral.
 */
inline double kernel_tail(const KernelModel& m, const Point& z, double r, double p, double alpha,
                          std::optional<PullbackSpec> spec = std::nullopt) {
  SpaceParams{p, alpha}.validate();
  if (!(r > 0 && r < 1)) throw BergmanError("kernel_tail: r must lie in (0, 1)");
  PullbackSpec sp = spec ? *spec : berezin_rule_spec(m.domain.n);
  auto [tail, all] = detail::kernel_mass(m, z, p, alpha, sp, [r](const Point& u, const Point&) { return abs(u) >= r; });
  if (!(all > 0)) throw BergmanError("kernel_tail: quadrature failure");
  return std::pow(tail / all, 1.0 / p);
}

/// ||k_z||^p_{L^p_alpha(E cap Y(z, r))} (normalized), used in the tail/sup duality check.
inline double kernel_mass_in_ball(const KernelModel& m, const RegionSet& E, const Point& z, double r, double p, double alpha,
                                  std::optional<PullbackSpec> spec = std::nullopt) {
  PullbackSpec sp = spec ? *spec : berezin_rule_spec(m.domain.n);
  auto [in, all] = detail::kernel_mass(m, z, p, alpha, sp, [&](const Point& u, const Point& w) { return abs(u) < r && E.contains(w); });
  return in / all;
}

// ---------------------------------------------------------------------------
// Function norms and Toeplitz lower bounds

/// Rule suited to an ensemble member: pullback about its center (kernels) or the origin.
inline Quadrature member_rule(const Domain& d, const EnsembleMember& f, int degree_hint) {
  Point c = f.kind == MemberKind::TruncatedKernel ? f.center : Point{};
  if (d.n == 1) return pullback_rule(d, c, 0.0, 1.0, PullbackSpec{std::max(24, degree_hint / 2 + 12), 4, std::max(256, 4 * degree_hint + 64), 4, 0.4});
  return pullback_rule(d, c, 0.0, 1.0, PullbackSpec{std::max(12, degree_hint / 2 + 6), 3, std::max(32, 2 * degree_hint + 8), std::max(8, degree_hint / 2 + 4), 0.4});
}

/// (int sigma |f|^p |rho|^alpha, int |f|^p |rho|^alpha) on a rule.
template <class Sigma>
std::pair<double, double> weighted_masses(const Domain& d, const Quadrature& q, double p, double alpha, const Function& f, Sigma&& sigma) {
  double a = 0, b = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    double v = q.weights[i] * std::pow(std::abs(f(q.nodes[i])), p) * weight(d, q.nodes[i], alpha);
    b += v;
    a += v * sigma(q.nodes[i]);
  }
  return {a, b};
}

struct ToeplitzBound {
  double infimum = std::numeric_limits<double>::infinity();
  std::string witness;
  std::vector<double> ratios;
};

/**
 * @brief Empirical inf over the ensemble of <T_sigma f, f> / ||f||^2 (weight |rho|^alpha).
 */
inline ToeplitzBound toeplitz_lower_bound(const Domain& d, const std::function<double(const Point&)>& sigma, double alpha,
                                          const std::vector<EnsembleMember>& ens) {
  ToeplitzBound tb;
  tb.ratios = parallel_map<double>(ens.size(), [&](std::size_t i) {
    auto q = member_rule(d, ens[i], ens[i].degree);
    Function f = [&](const Point& z) { return ens[i](z); };
    auto [a, b] = weighted_masses(d, q, 2.0, alpha, f, sigma);
    return a / b;
  });
  for (std::size_t i = 0; i < ens.size(); ++i)
    if (tb.ratios[i] < tb.infimum) {
      tb.infimum = tb.ratios[i];
      tb.witness = ens[i].id;
    }
  return tb;
}

}  // namespace bergman
