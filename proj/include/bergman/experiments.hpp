#pragma once

/**
 * @file experiments.hpp
 * @brief End-to-end studies: discrete and density measures, Carleson scans and reverse-Carleson
 * checks, point sampling, domination constants, good/bad splits, zero counts, sublevel sets and
 * lower-dimensional sets.
 */

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <memory>

#include "bergman/density.hpp"

namespace bergman {

/// Volume of Y(z, r) on a disc, ball or ellipsoid (closed form through the linear map).
inline double kobayashi_ball_volume(const Domain& d, const Point& z, double r) {
  if (!d.linear_image_of_ball()) throw BergmanError("kobayashi_ball_volume: needs a disc, ball or ellipsoid");
  return ball_volume_closed_form(d.to_ball(z), r, d.n) / d.to_ball_jacobian();
}

namespace detail {

using P4 = boost::geometry::model::point<double, 4, boost::geometry::cs::cartesian>;
using Box4 = boost::geometry::model::box<P4>;

inline P4 p4(double a, double b, double c, double e) {
  P4 q;
  boost::geometry::set<0>(q, a);
  boost::geometry::set<1>(q, b);
  boost::geometry::set<2>(q, c);
  boost::geometry::set<3>(q, e);
  return q;
}

inline P4 p4(const Point& b) { return p4(b[0].real(), b[0].imag(), b[1].real(), b[1].imag()); }

/// Bounding box of the Euclidean ellipsoid phi_a(r B) (Y(a, r) in the model ball).
inline Box4 ellipsoid_box(const Point& a, double r, int n) {
  const double a2 = norm2(a), den = 1 - r * r * a2;
  Point c = ((1 - r * r) / den) * a;
  // semi-axes: r(1-|a|^2)/den along a, r sqrt((1-|a|^2)/den) across (n = 2)
  double h = (n == 1 ? r * (1 - a2) / den : r * std::sqrt((1 - a2) / den)) * (1 + 1e-9) + 1e-15;
  return Box4(p4(c[0].real() - h, c[0].imag() - h, c[1].real() - h, c[1].imag() - h),
              p4(c[0].real() + h, c[0].imag() + h, c[1].real() + h, c[1].imag() + h));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Spatial index over points, queried by Kobayashi balls

/**
 * @brief R-tree over points in the model-ball coordinates. A query Y(z, r) visits the bounding box
 * of the Euclidean ellipsoid phi_z(r B) and filters by the exact pseudo-distance.
 */
class AtomIndex {
 public:
  AtomIndex(const Domain& d, const std::vector<Point>& pts) : d_(d) {
    if (!d.linear_image_of_ball()) throw BergmanError("AtomIndex: needs a disc, ball or ellipsoid");
    std::vector<Entry> e;
    e.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      ball_.push_back(d.to_ball(pts[i]));
      e.emplace_back(detail::p4(ball_.back()), i);
    }
    tree_ = Tree(e.begin(), e.end());
  }

  /// Calls fn(i) for every indexed point in Y(z, r).
  template <class F>
  void query(const Point& z, double r, F&& fn) const {
    Point a = d_.to_ball(z);
    for_box(a, r, [&](std::size_t i) {
      if (pseudo_distance_ball(a, ball_[i], d_.n) < r) fn(i);
    });
  }

  bool any_within(const Point& z, double r) const {
    bool hit = false;
    Point a = d_.to_ball(z);
    box_query(a, r, [&](std::size_t i) {
      if (pseudo_distance_ball(a, ball_[i], d_.n) < r) hit = true;
      return !hit;
    });
    return hit;
  }

  std::size_t size() const { return ball_.size(); }

 private:
  using Entry = std::pair<detail::P4, std::size_t>;
  using Tree = boost::geometry::index::rtree<Entry, boost::geometry::index::rstar<16>>;

  /// Visits candidates while fn returns true.
  template <class F>
  void box_query(const Point& a, double r, F&& fn) const {
    auto box = detail::ellipsoid_box(a, r, d_.n);
    for (auto it = tree_.qbegin(boost::geometry::index::intersects(box)); it != tree_.qend(); ++it)
      if (!fn(it->second)) return;
  }
  template <class F>
  void for_box(const Point& a, double r, F&& fn) const {
    box_query(a, r, [&](std::size_t i) {
      fn(i);
      return true;
    });
  }

  Domain d_;
  std::vector<Point> ball_;
  Tree tree_;
};

// ---------------------------------------------------------------------------
// Measures

/// Finite sum of point masses, with the parameters of the construction that produced it.
struct DiscreteMeasure {
  std::vector<Point> atoms;
  std::vector<double> mass;
  double r = 0, R = 0, alpha = 0;
  std::string provenance;
  bool disjoint = true, union_audit = true;
  double total() const {
    double s = 0;
    for (double m : mass) s += m;
    return s;
  }
};

enum class MeasureKind { Discrete, Density };

/**
 * @brief Positive measure mu on Omega together with the exponent alpha of mu_alpha = |rho|^-alpha mu.
 * Density measures store the density of mu_alpha with respect to area.
 */
struct Measure {
  MeasureKind kind = MeasureKind::Density;
  std::string name;
  double alpha = 0;
  DiscreteMeasure discrete;
  std::function<double(const Point&)> sigma;
};

/// mu = |rho|^alpha dA, so mu_alpha is area measure.
inline Measure lebesgue_measure(const Domain& d, double alpha) {
  (void)d;
  Measure m;
  m.name = "lebesgue";
  m.alpha = alpha;
  m.sigma = [](const Point&) { return 1.0; };
  return m;
}

/// mu = sigma |rho|^alpha dA.
inline Measure density_measure(const Domain& d, std::function<double(const Point&)> sigma, double alpha, std::string name = "density") {
  (void)d;
  Measure m;
  m.name = std::move(name);
  m.alpha = alpha;
  m.sigma = std::move(sigma);
  return m;
}

inline Measure discrete_measure(DiscreteMeasure mu, double alpha) {
  for (double v : mu.mass)
    if (!(v >= 0) || !std::isfinite(v)) throw BergmanError("discrete_measure: masses must be nonnegative and finite");
  Measure m;
  m.kind = MeasureKind::Discrete;
  m.name = mu.provenance.empty() ? "discrete" : mu.provenance;
  m.alpha = alpha;
  m.discrete = std::move(mu);
  return m;
}

/// Averages mu_alpha(Y(z, s)) / |Y(z, s)|, with an index over the atoms of a discrete measure.
class MeasureAverager {
 public:
  MeasureAverager(const Domain& d, const Measure& mu) : d_(d), mu_(mu) {
    if (!d.linear_image_of_ball()) throw BergmanError("MeasureAverager: needs a disc, ball or ellipsoid");
    if (mu.kind == MeasureKind::Discrete) {
      index_ = std::make_shared<AtomIndex>(d, mu.discrete.atoms);
      for (std::size_t k = 0; k < mu.discrete.atoms.size(); ++k) {
        double w = weight(d, mu.discrete.atoms[k], mu.alpha);
        if (!(w > 0)) throw BergmanError("MeasureAverager: atom on the boundary");
        mass_alpha_.push_back(mu.discrete.mass[k] / w);
      }
    }
  }

  double mass(const Point& z, double s) const {
    if (mu_.kind == MeasureKind::Discrete) {
      double m = 0;
      index_->query(z, s, [&](std::size_t k) { m += mass_alpha_[k]; });
      return m;
    }
    auto q = pullback_rule(d_, z, 0.0, s, PullbackSpec{8, 1, 32, 6, 0.35});
    double m = 0;
    for (std::size_t i = 0; i < q.size(); ++i) m += q.weights[i] * mu_.sigma(q.nodes[i]);
    return m;
  }

  double average(const Point& z, double s) const { return mass(z, s) / kobayashi_ball_volume(d_, z, s); }

  const std::vector<double>& alpha_masses() const { return mass_alpha_; }

 private:
  Domain d_;
  Measure mu_;
  std::shared_ptr<AtomIndex> index_;
  std::vector<double> mass_alpha_;
};

// ---------------------------------------------------------------------------
// Lattices and sampling measures

/**
 * @brief Staggered hyperbolic lattice in the disc: the origin and rings at Kobayashi radius k *
 * spacing, each with ceil(pi sinh(2t) / spacing) points, kept while 1 - |z| >= delta_min.
 */
inline std::vector<Point> hyperbolic_lattice(double spacing, double delta_min, double phase = 0.0) {
  if (!(spacing > 0) || !(delta_min > 0 && delta_min < 1)) throw BergmanError("hyperbolic_lattice: bad spacing or truncation");
  std::vector<Point> out{Point{}};
  for (int k = 1;; ++k) {
    double t = k * spacing, rho = std::tanh(t);
    if (1 - rho < delta_min) break;
    int m = std::max(6, static_cast<int>(std::ceil(pi * std::sinh(2 * t) / spacing)));
    for (int j = 0; j < m; ++j) out.push_back(Point{std::polar(rho, phase + (j + 0.5 * (k % 2)) * 2 * pi / m), 0.0});
  }
  return out;
}

/// Every other point (even positions).
inline std::vector<Point> thin_every_other(const std::vector<Point>& pts) {
  std::vector<Point> out;
  for (std::size_t i = 0; i < pts.size(); i += 2) out.push_back(pts[i]);
  return out;
}

/// Drops the points with |z| > rmin whose argument is within half_width of theta_c.
inline std::vector<Point> remove_sector(const std::vector<Point>& pts, double theta_c, double half_width, double rmin) {
  std::vector<Point> out;
  for (const auto& z : pts) {
    double dth = std::abs(std::remainder(std::arg(z[0]) - theta_c, 2 * pi));
    if (abs(z) > rmin && dth < half_width) continue;
    out.push_back(z);
  }
  return out;
}

/**
 * @brief Greedy Vitali selection of b_k from a_j (decreasing delta, index order on ties) with
 * pairwise disjoint Y(b_k, r), and the measure sum_k |Y(b_k, R)| |rho(b_k)|^alpha delta_{b_k}.
 */
inline DiscreteMeasure sampling_measure(const Domain& d, const std::vector<Point>& pts, double r, double R, double alpha) {
  if (pts.empty()) throw BergmanError("sampling_measure: empty point set");
  if (!(0 < r && r < R && R < 1)) throw BergmanError("sampling_measure: need 0 < r < R < 1");
  if (!d.linear_image_of_ball()) throw BergmanError("sampling_measure: needs a disc, ball or ellipsoid");
  for (const auto& a : pts)
    if (!d.contains(a)) throw BergmanError("sampling_measure: point outside the domain");
  std::vector<double> del(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) del[i] = delta_of(d, pts[i]);
  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return del[a] > del[b]; });

  // Y(a, r) and Y(b, r) meet iff the Kobayashi distance is below 2 atanh(r)
  const double sep = std::tanh(2 * std::atanh(r));
  using Entry = std::pair<detail::P4, std::size_t>;
  boost::geometry::index::rtree<Entry, boost::geometry::index::rstar<16>> kept;
  std::vector<Point> kb;
  DiscreteMeasure mu;
  mu.r = r;
  mu.R = R;
  mu.alpha = alpha;
  for (std::size_t i : order) {
    Point a = d.to_ball(pts[i]);
    auto box = detail::ellipsoid_box(a, sep, d.n);
    bool ok = true;
    for (auto it = kept.qbegin(boost::geometry::index::intersects(box)); it != kept.qend() && ok; ++it)
      if (pseudo_distance_ball(a, kb[it->second], d.n) < sep) ok = false;
    if (!ok) continue;
    kept.insert(Entry(detail::p4(a), kb.size()));
    kb.push_back(a);
    mu.atoms.push_back(pts[i]);
  }
  // union audit: Y(a_j, r) inside Y(b_k, R) whenever d(a_j, b_k) <= atanh R - atanh r
  AtomIndex idx(d, mu.atoms);
  const double host = std::tanh(std::atanh(R) - std::atanh(r));
  for (const auto& a : pts)
    if (!idx.any_within(a, host)) mu.union_audit = false;
  for (const auto& b : mu.atoms) mu.mass.push_back(kobayashi_ball_volume(d, b, R) * weight(d, b, alpha));
  std::ostringstream os;
  os << "sampling(r=" << r << ",R=" << R << ",alpha=" << alpha << ",points=" << pts.size() << ")";
  mu.provenance = os.str();
  return mu;
}

/// G' = union of Y(b_k, R) over the atoms.
inline RegionSet sampling_union(const Domain& d, const DiscreteMeasure& mu) {
  auto idx = std::make_shared<AtomIndex>(d, mu.atoms);
  const double R = mu.R;
  RegionSet e;
  e.name = "sampling-union";
  e.predicate = [d, idx, R](const Point& z) { return d.contains(z) && idx->any_within(z, R); };
  return e;
}

// ---------------------------------------------------------------------------
// Carleson norm

struct CarlesonOptions {
  double eps = 0.1;   ///< G threshold relative to the norm
  double s = 0.24;    ///< averaging radius for G
  double r0 = 0.5;    ///< density radius for G
  std::vector<Point> density_centers;  ///< empty: G's density is not scanned
  DensityOptions density;
};

struct CarlesonReport {
  double norm = 0;
  std::size_t argmax = 0;
  std::vector<Point> centers;
  std::vector<double> ratios;
  double eps = 0, s = 0;
  RegionSet G;
  DensityReport G_density;
  bool G_scanned = false;
};

/// Origin plus collar centers at delta = 2^-j, j = 1..jmax.
inline std::vector<Point> carleson_scan_centers(const Domain& d, int jmax, std::uint64_t seed) {
  std::vector<Point> c{Point{}};
  auto col = collar_centers(d, default_rays(d), 1, jmax, seed);
  c.insert(c.end(), col.begin(), col.end());
  return c;
}

/**
 * @brief ||mu_alpha||_C = sup over scan centers of mu_alpha(Y(z, 1/2)) / |Y(z, 1/2)|, and the set
 * G = {z : mu_alpha(Y(z, s)) / |Y(z, s)| > eps ||mu_alpha||_C} with its density scan.
 */
inline CarlesonReport carleson_norm(const Domain& d, const Measure& mu, const std::vector<Point>& centers, const CarlesonOptions& opt = {},
                                    std::size_t budget = 100000) {
  if (centers.empty()) throw BergmanError("carleson_norm: no scan centers");
  if (centers.size() > budget) throw BergmanError("carleson_norm: scan budget exhausted");
  auto avg = std::make_shared<MeasureAverager>(d, mu);
  CarlesonReport rep;
  rep.centers = centers;
  rep.ratios = parallel_map<double>(centers.size(), [&](std::size_t i) { return avg->average(centers[i], 0.5); });
  for (std::size_t i = 0; i < centers.size(); ++i)
    if (rep.ratios[i] > rep.norm) {
      rep.norm = rep.ratios[i];
      rep.argmax = i;
    }
  if (!std::isfinite(rep.norm)) throw BergmanError("carleson_norm: measure is not finite on the scan");
  rep.eps = opt.eps;
  rep.s = opt.s;
  const double thr = opt.eps * rep.norm, s = opt.s;
  rep.G.name = "G";
  rep.G.predicate = [d, avg, thr, s](const Point& z) { return d.contains(z) && avg->average(z, s) > thr; };
  if (!opt.density_centers.empty()) {
    rep.G_density = relative_density(d, rep.G, opt.r0, opt.density_centers, opt.density);
    rep.G_scanned = true;
  }
  return rep;
}

/**
 * @brief Disc value of the covering-lemma bound C3 C4 on the Carleson norm of a sampling measure:
 * C2/c2 = 4 cosh^4(1) from the closed-form ball volume, sup R/r = 5.
 */
inline double disc_carleson_bound(double R) {
  (void)R;
  const double ratio = 4 * std::pow(std::cosh(1.0), 4);
  const double C3 = ratio * 25.0;
  const double C4 = ratio * std::pow(2 * std::tanh(std::atanh(0.25) + std::atanh(0.5)), 2);
  return C3 * C4;
}

// ---------------------------------------------------------------------------
// Integrals over sets and measures

/// (int |f|^p d mu_E, int_Omega |f|^p |rho|^alpha dA) for one ensemble member.
using SetIntegral = std::function<std::pair<double, double>(const EnsembleMember&, double p)>;

namespace detail {

inline PullbackSpec member_spec(const Domain& d, int degree) {
  if (d.n == 1) return PullbackSpec{std::max(24, degree / 2 + 12), 4, std::max(256, 4 * degree + 64), 4, 0.4};
  return PullbackSpec{std::max(12, degree / 2 + 6), 3, std::max(32, 2 * degree + 8), std::max(8, degree / 2 + 4), 0.4};
}

/// Masked integral of |f|^p |rho|^alpha over E and over Omega in the pullback coordinates about c.
inline std::pair<double, double> masked_norms(const Domain& d, const Function& f, const Point& c, int degree, double p, double alpha,
                                              const std::function<bool(const Point&)>& inside) {
  const Point cb = d.to_ball(c);
  const double jl = 1.0 / d.to_ball_jacobian();
  auto map = [&](const Point& u) { return d.from_ball(ball_automorphism(cb, u, d.n)); };
  auto g = [&](const Point& u) {
    Point w = map(u);
    return jl * ball_automorphism_jacobian(cb, u, d.n) * std::pow(std::abs(f(w)), p) * weight(d, w, alpha);
  };
  auto in = [&](const Point& u) { return inside(map(u)); };
  return masked_polar_integral(d.n, 0.0, 1.0, member_spec(d, degree), g, in, std::arg(cb[0]));
}

inline Point member_center(const EnsembleMember& f) { return f.kind == MemberKind::TruncatedKernel ? f.center : Point{}; }

inline double sum_power(const Quadrature& q, const Domain& d, const EnsembleMember& f, double p, double alpha) {
  double s = 0;
  for (std::size_t i = 0; i < q.size(); ++i) s += q.weights[i] * std::pow(std::abs(f(q.nodes[i])), p) * weight(d, q.nodes[i], alpha);
  return s;
}

}  // namespace detail

/// Arc-length (nu = 1) or counting (nu = 0) measure of E inside a predicate.
inline double curve_measure_in(const RegionSet& E, const std::function<bool(const Point&)>& inside) {
  if (E.kind == RegionKind::PointCloud) {
    double c = 0;
    for (const auto& z : E.points) c += inside(z) ? 1 : 0;
    return c;
  }
  if (E.kind != RegionKind::CurveUnion) throw BergmanError("curve_measure_in: curve or point set required");
  double s = 0;
  for (const auto& c : E.curves) s += arc_length_rule_where(c, inside).total();
  return s;
}

/**
 * @brief Integral of |f|^p |rho|^alpha over E: area (predicate sets, edge-aware masked pullback
 * rule), arc length (curve unions) or counting measure (point sets).
 */
inline SetIntegral set_integral(const Domain& d, const RegionSet& E, double alpha) {
  if (E.kind == RegionKind::Predicate) {
    return [d, E, alpha](const EnsembleMember& f, double p) {
      Function fn = [&](const Point& z) { return f(z); };
      return detail::masked_norms(d, fn, detail::member_center(f), f.degree, p, alpha, [&](const Point& w) { return E.contains(w); });
    };
  }
  auto rules = std::make_shared<std::vector<Quadrature>>();
  if (E.kind == RegionKind::CurveUnion)
    for (const auto& c : E.curves) rules->push_back(arc_length_rule_where(c, [d](const Point& z) { return d.contains(z); }));
  return [d, E, alpha, rules](const EnsembleMember& f, double p) {
    double a = 0;
    if (E.kind == RegionKind::CurveUnion)
      for (const auto& q : *rules) a += detail::sum_power(q, d, f, p, alpha);
    else
      for (const auto& z : E.points) a += std::pow(std::abs(f(z)), p) * weight(d, z, alpha);
    double b = detail::sum_power(member_rule(d, f, f.degree), d, f, p, alpha);
    return std::pair<double, double>{a, b};
  };
}

/// (int |f|^p d mu, int |f|^p |rho|^alpha dA) with alpha the measure's exponent.
inline SetIntegral measure_integral(const Domain& d, const Measure& mu) {
  return [d, mu](const EnsembleMember& f, double p) {
    auto q = member_rule(d, f, f.degree);
    double a = 0, b = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      double v = q.weights[i] * std::pow(std::abs(f(q.nodes[i])), p) * weight(d, q.nodes[i], mu.alpha);
      b += v;
      if (mu.kind == MeasureKind::Density) a += v * mu.sigma(q.nodes[i]);
    }
    if (mu.kind == MeasureKind::Discrete)
      for (std::size_t k = 0; k < mu.discrete.atoms.size(); ++k) a += mu.discrete.mass[k] * std::pow(std::abs(f(mu.discrete.atoms[k])), p);
    return std::pair<double, double>{a, b};
  };
}

// ---------------------------------------------------------------------------
// Domination constants

struct DominationRecord {
  std::string ensemble;
  int degree = 0;
  std::vector<std::string> ids;
  std::vector<double> ratios;  ///< ||f||_{L^p_alpha(Omega)} / ||f||_{L^p(E, measure)}
  double supremum = 0;
  std::string witness;
  bool zero_denominator = false;
};

inline DominationRecord domination_constant(const SetIntegral& si, double p, const std::vector<EnsembleMember>& ens,
                                            std::string ensemble_id = "") {
  if (ens.empty()) throw BergmanError("domination_constant: empty ensemble");
  DominationRecord rec;
  rec.ensemble = std::move(ensemble_id);
  auto parts = parallel_map<std::pair<double, double>>(ens.size(), [&](std::size_t i) { return si(ens[i], p); });
  for (std::size_t i = 0; i < ens.size(); ++i) {
    rec.ids.push_back(ens[i].id);
    rec.degree = std::max(rec.degree, ens[i].degree);
    auto [a, b] = parts[i];
    double v = a > 0 ? std::pow(b / a, 1.0 / p) : std::numeric_limits<double>::infinity();
    if (!(a > 0)) rec.zero_denominator = true;
    rec.ratios.push_back(v);
    if (v > rec.supremum || rec.witness.empty()) {
      rec.supremum = std::max(rec.supremum, v);
      rec.witness = ens[i].id;
    }
  }
  return rec;
}

inline DominationRecord domination_constant(const Domain& d, const RegionSet& E, double p, double alpha, const std::vector<EnsembleMember>& ens,
                                            std::string ensemble_id = "") {
  return domination_constant(set_integral(d, E, alpha), p, ens, std::move(ensemble_id));
}

struct DominationTrend {
  std::vector<int> degrees;
  std::vector<double> suprema;
  std::vector<std::string> witnesses;
  bool monotone_increasing = true;
  double relative_change = 0;  ///< (max - min) / min over the schedule
};

/// Domination constant over a degree schedule; the ensemble spec is re-seeded per degree.
inline DominationTrend domination_trend(const Domain& d, const SetIntegral& si, double p, EnsembleSpec spec, const std::vector<int>& degrees) {
  DominationTrend t;
  for (int D : degrees) {
    spec.degree = D;
    auto rec = domination_constant(si, p, make_ensemble(d, spec), "degree" + std::to_string(D));
    t.degrees.push_back(D);
    t.suprema.push_back(rec.supremum);
    t.witnesses.push_back(rec.witness);
  }
  for (std::size_t i = 1; i < t.suprema.size(); ++i)
    if (!(t.suprema[i] > t.suprema[i - 1])) t.monotone_increasing = false;
  auto [lo, hi] = std::minmax_element(t.suprema.begin(), t.suprema.end());
  if (!t.suprema.empty()) t.relative_change = (*hi - *lo) / *lo;
  return t;
}

// ---------------------------------------------------------------------------
// Good/bad decomposition

struct GoodBadSplit {
  std::vector<std::size_t> good, bad;
  std::vector<double> norm_Y, norm_X;  ///< ||f||^p over Y_k and X_k
  std::size_t collar_indices = 0;      ///< centers with delta < eps
  double bad_mass = 0;                 ///< sum over bad k of ||f||^p_{Y_k}
  double collar_mass = 0;              ///< ||f||^p over {delta < eps}
  bool audit = true;                   ///< bad_mass <= collar_mass / 2
};

/// max over the ensemble of ||f||^p_Omega / ||f||^p_{Omega_eps} (p-th power form).
inline double fit_collar_constant(const Domain& d, double eps, double p, double alpha, const std::vector<EnsembleMember>& ens) {
  RegionSet collar;
  collar.predicate = [d, eps](const Point& z) { return delta_of(d, z) < eps; };
  auto rec = domination_constant(set_integral(d, collar, alpha), p, ens);
  return std::pow(rec.supremum, p);
}

/**
 * @brief Index k (center in Omega_eps) is good iff (2 C_eps M)^{1/p} ||f||_{Y_k} >= ||f||_{X_k}, with
 * Y_k = Y(w_k, r), X_k = Y(w_k, R); C_eps in the p-th power form.
 */
inline GoodBadSplit good_bad_split(const Domain& d, const Cover& cover, double r, double R, const Function& f, double p, double alpha,
                                   double C_eps, int M, double eps, int degree_hint = 40, Point center = {}) {
  if (!(0 < r && r < R && R < 1)) throw BergmanError("good_bad_split: need 0 < r < R < 1");
  GoodBadSplit s;
  const std::size_t K = cover.centers.size();
  s.norm_Y.resize(K);
  s.norm_X.resize(K);
  const PullbackSpec spec{12, 1, 48, 8, 0.35};
  parallel_for(K, [&](std::size_t k) {
    auto mass = [&](double rad) {
      auto q = pullback_rule(d, cover.centers[k], 0.0, rad, spec);
      double m = 0;
      for (std::size_t i = 0; i < q.size(); ++i) m += q.weights[i] * std::pow(std::abs(f(q.nodes[i])), p) * weight(d, q.nodes[i], alpha);
      return m;
    };
    s.norm_Y[k] = mass(r);
    s.norm_X[k] = mass(R);
  });
  const double factor = 2 * C_eps * M;
  for (std::size_t k = 0; k < K; ++k) {
    if (!(delta_of(d, cover.centers[k]) < eps)) continue;
    ++s.collar_indices;
    if (factor * s.norm_Y[k] >= s.norm_X[k]) {
      s.good.push_back(k);
    } else {
      s.bad.push_back(k);
      s.bad_mass += s.norm_Y[k];
    }
  }
  if (s.collar_indices > 0 && s.good.empty()) throw BergmanError("good_bad_split: no good index (C_eps or M miscalibrated)");
  s.collar_mass = detail::masked_norms(d, f, center, degree_hint, p, alpha, [&](const Point& z) { return delta_of(d, z) < eps; }).first;
  s.audit = s.bad_mass <= 0.5 * s.collar_mass * (1 + 1e-12);
  return s;
}

// ---------------------------------------------------------------------------
// Point sampling

struct SamplingRecord {
  std::vector<std::string> ids;
  std::vector<double> ratios;  ///< ||f||^p_{L^p_alpha} / sum_j |f(a_j)|^p delta(a_j)^{n+1+alpha}
  double supremum = 0;
  std::string witness;
  std::size_t points = 0;
};

inline SamplingRecord point_sampling_check(const Domain& d, const std::vector<Point>& pts, double p, double alpha,
                                           const std::vector<EnsembleMember>& ens) {
  if (pts.empty()) throw BergmanError("point_sampling_check: zero sampling sum (no points)");
  std::vector<double> wt(pts.size());
  for (std::size_t j = 0; j < pts.size(); ++j) wt[j] = std::pow(delta_of(d, pts[j]), d.n + 1 + alpha);
  SamplingRecord rec;
  rec.points = pts.size();
  rec.ratios = parallel_map<double>(ens.size(), [&](std::size_t i) {
    double num = detail::sum_power(member_rule(d, ens[i], ens[i].degree), d, ens[i], p, alpha);
    double den = 0;
    for (std::size_t j = 0; j < pts.size(); ++j) den += std::pow(std::abs(ens[i](pts[j])), p) * wt[j];
    if (!(den > 0)) throw BergmanError("point_sampling_check: zero sampling sum for " + ens[i].id);
    return num / den;
  });
  for (std::size_t i = 0; i < ens.size(); ++i) {
    rec.ids.push_back(ens[i].id);
    if (rec.ratios[i] > rec.supremum) {
      rec.supremum = rec.ratios[i];
      rec.witness = ens[i].id;
    }
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Reverse Carleson

struct ReverseCarlesonOptions {
  double p = 2, eps = 0.1, gamma = 0.3, s = 0.24, r0 = 0.5;
  double q = 1.0;              ///< exponent in s <= K^-1 eps^{1/p} gamma^q (calibration choice)
  double lipschitz_R = 0.5;
  int lipschitz_pairs = 64;
  int lemma_members = 4;       ///< members used by the Lipschitz and averaged-difference audits
  std::vector<Point> scan_centers, density_centers;
  DensityOptions density;
  std::uint64_t seed = 1;
};

struct ReverseCarlesonReport {
  CarlesonReport carleson;
  bool norm_finite = false, G_dense = false, hypotheses = false;
  double constant = 0;  ///< sup_f int |f|^p |rho|^alpha dA / int |f|^p d mu
  std::string witness;
  std::vector<double> ratios;
  double lipschitz_C = 0;  ///< sup |f(z) - f(w)| / (d(z, w) <f>_{Y(z, R), p})
  double lemma_C = 0;      ///< averaged difference / (s^p ||mu_alpha||_C ||f||^p)
  double domination_G = 0; ///< domination constant of G on the audit members
  double K_fit = 0, s_max = 0;
  bool s_admissible = false;
  std::string verdict;
};

/**
 * @brief Checks the hypotheses (finite Carleson norm of mu_alpha, G relatively dense), measures
 * the reverse-Carleson constant over the ensemble, and audits the difference-quotient bound and
 * the averaged difference inequality at radius s.
 */
inline ReverseCarlesonReport reverse_carleson_check(const Domain& d, const Measure& mu, const std::vector<EnsembleMember>& ens,
                                                    const ReverseCarlesonOptions& o) {
  if (o.scan_centers.empty() || o.density_centers.empty()) throw BergmanError("reverse_carleson_check: scan and density centers required");
  ReverseCarlesonReport rep;
  CarlesonOptions co;
  co.eps = o.eps;
  co.s = o.s;
  co.r0 = o.r0;
  co.density_centers = o.density_centers;
  co.density = o.density;
  rep.carleson = carleson_norm(d, mu, o.scan_centers, co);
  rep.norm_finite = std::isfinite(rep.carleson.norm) && rep.carleson.norm > 0;
  rep.G_dense = rep.carleson.G_density.infimum >= o.gamma;
  rep.hypotheses = rep.norm_finite && rep.G_dense;

  auto rec = domination_constant(measure_integral(d, mu), o.p, ens);
  for (double v : rec.ratios) rep.ratios.push_back(std::pow(v, o.p));
  rep.constant = std::pow(rec.supremum, o.p);
  rep.witness = rec.witness;

  const std::size_t nm = std::min<std::size_t>(ens.size(), static_cast<std::size_t>(std::max(1, o.lemma_members)));
  // difference quotients on sampled pairs w in Y(z, s)
  {
    Rng rng(derive_seed(o.seed, "lipschitz"));
    for (int k = 0; k < o.lipschitz_pairs; ++k) {
      const Point& z = o.scan_centers[static_cast<std::size_t>(k) % o.scan_centers.size()];
      Point zb = d.to_ball(z);
      Point u = uniform_in_ball(rng, d.n, o.s);
      Point w = d.from_ball(ball_automorphism(zb, u, d.n));
      double dist = kobayashi_exact(d, z, w);
      if (!(dist > 0)) continue;
      auto q = pullback_rule(d, z, 0.0, o.lipschitz_R, PullbackSpec{10, 1, 40, 8, 0.35});
      for (std::size_t i = 0; i < nm; ++i) {
        double m = 0;
        for (std::size_t j = 0; j < q.size(); ++j) m += q.weights[j] * std::pow(std::abs(ens[i](q.nodes[j])), o.p);
        double avg = std::pow(m / q.total(), 1.0 / o.p);
        if (avg > 0) rep.lipschitz_C = std::max(rep.lipschitz_C, std::abs(ens[i](z) - ens[i](w)) / (dist * avg));
      }
    }
  }
  // averaged difference inequality with mu_alpha
  {
    MeasureAverager avg(d, mu);
    std::vector<Point> zs;
    std::vector<double> ms;
    if (mu.kind == MeasureKind::Discrete) {
      zs = mu.discrete.atoms;
      ms = avg.alpha_masses();
    } else {
      auto q = pullback_rule(d, Point{}, 0.0, 1.0, PullbackSpec{12, 6, 64, 8, 0.4});
      for (std::size_t i = 0; i < q.size(); ++i) {
        zs.push_back(q.nodes[i]);
        ms.push_back(q.weights[i] * mu.sigma(q.nodes[i]));
      }
    }
    for (std::size_t i = 0; i < nm; ++i) {
      const auto& f = ens[i];
      auto part = parallel_map<double>(zs.size(), [&](std::size_t k) {
        if (ms[k] == 0) return 0.0;
        auto q = pullback_rule(d, zs[k], 0.0, o.s, PullbackSpec{4, 1, 8, 4, 0.35});
        cplx fz = f(zs[k]);
        double s = 0;
        for (std::size_t j = 0; j < q.size(); ++j) s += q.weights[j] * std::pow(std::abs(f(q.nodes[j]) - fz), o.p) * weight(d, q.nodes[j], mu.alpha);
        return ms[k] * s / kobayashi_ball_volume(d, zs[k], o.s);
      });
      double lhs = 0;
      for (double v : part) lhs += v;
      double nf = detail::sum_power(member_rule(d, f, f.degree), d, f, o.p, mu.alpha);
      rep.lemma_C = std::max(rep.lemma_C, lhs / (std::pow(o.s, o.p) * rep.carleson.norm * nf));
    }
  }
  // calibration of K: the proof needs C^{1/p} s <= eps^{1/p} / (2 D_G) with D_G the domination constant of G
  {
    std::vector<EnsembleMember> sub(ens.begin(), ens.begin() + static_cast<std::ptrdiff_t>(nm));
    auto dg = domination_constant(set_integral(d, rep.carleson.G, mu.alpha), o.p, sub);
    rep.domination_G = dg.supremum;
    if (std::isfinite(dg.supremum) && rep.lemma_C > 0) {
      rep.s_max = std::pow(o.eps, 1.0 / o.p) / (2 * std::pow(rep.lemma_C, 1.0 / o.p) * dg.supremum);
      rep.K_fit = std::pow(o.eps, 1.0 / o.p) * std::pow(o.gamma, o.q) / rep.s_max;
      rep.s_admissible = o.s <= rep.s_max;
    }
  }
  if (!rep.hypotheses)
    rep.verdict = "hypotheses-fail";
  else if (std::isfinite(rep.constant))
    rep.verdict = "pass";
  else
    rep.verdict = "conclusion-fail";
  return rep;
}

// ---------------------------------------------------------------------------
// Zero counting

struct Square {
  cplx center = 0;
  double side = 1;
};

struct ZeroCount {
  int count = 0;
  double winding = 0, residual = 0;
  bool perturbed = false;
  Square used;
};

namespace detail {

/// Winding number of f along the boundary of Q; returns false if the contour meets a near-zero.
inline bool winding_number(const std::function<cplx(cplx)>& f, const Square& Q, double& w) {
  const double h = 0.5 * Q.side;
  const cplx c[5] = {Q.center + cplx(-h, -h), Q.center + cplx(h, -h), Q.center + cplx(h, h), Q.center + cplx(-h, h), Q.center + cplx(-h, -h)};
  double total = 0, fmax = 0, fmin = std::numeric_limits<double>::infinity();
  bool ok = true;
  std::function<void(cplx, cplx, cplx, cplx, int)> seg = [&](cplx a, cplx b, cplx fa, cplx fb, int depth) {
    double dphi = std::arg(fb / fa);
    if (std::abs(dphi) > 0.5) {
      if (depth >= 40) {
        ok = false;
        return;
      }
      cplx m = 0.5 * (a + b), fm = f(m);
      fmax = std::max(fmax, std::abs(fm));
      fmin = std::min(fmin, std::abs(fm));
      seg(a, m, fa, fm, depth + 1);
      seg(m, b, fm, fb, depth + 1);
      return;
    }
    total += dphi;
  };
  const int N = 256;
  for (int s = 0; s < 4; ++s) {
    cplx prev = c[s], fprev = f(prev);
    for (int k = 1; k <= N; ++k) {
      cplx z = c[s] + (c[s + 1] - c[s]) * (static_cast<double>(k) / N), fz = f(z);
      fmax = std::max({fmax, std::abs(fz), std::abs(fprev)});
      fmin = std::min({fmin, std::abs(fz), std::abs(fprev)});
      if (std::abs(fz) == 0 || std::abs(fprev) == 0) return false;
      seg(prev, z, fprev, fz, 0);
      prev = z;
      fprev = fz;
    }
  }
  w = total / (2 * pi);
  return ok && fmin > 1e-9 * fmax;
}

}  // namespace detail

/**
 * @brief Number of zeros of f in the open square Q by the argument principle. A contour passing
 * through or next to a zero is replaced by a slightly shifted square (recorded in the result).
 */
inline ZeroCount zero_set_count(const std::function<cplx(cplx)>& f, Square Q) {
  if (!(Q.side > 0)) throw BergmanError("zero_set_count: square side must be positive");
  ZeroCount z;
  z.used = Q;
  for (int attempt = 0; attempt < 8; ++attempt) {
    double w = 0;
    if (detail::winding_number(f, z.used, w)) {
      z.winding = w;
      z.count = static_cast<int>(std::lround(w));
      z.residual = std::abs(w - z.count);
      if (z.residual >= 0.1) throw BergmanError("zero_set_count: contour residual too large");
      return z;
    }
    z.perturbed = true;
    z.used.center = Q.center + Q.side * cplx(0.0131 * (attempt + 1), 0.0071 * (attempt + 1));
  }
  throw BergmanError("zero_set_count: no zero-free contour near the square");
}

/// sup |f| over the closed square (boundary samples refined by golden-section search).
inline double sup_on_square(const std::function<cplx(cplx)>& f, const Square& Q, int samples = 1024) {
  const double h = 0.5 * Q.side;
  const cplx c[5] = {Q.center + cplx(-h, -h), Q.center + cplx(h, -h), Q.center + cplx(h, h), Q.center + cplx(-h, h), Q.center + cplx(-h, -h)};
  double best = 0;
  for (int s = 0; s < 4; ++s) {
    auto at = [&](double t) { return std::abs(f(c[s] + (c[s + 1] - c[s]) * t)); };
    int kb = 0;
    double vb = -1;
    for (int k = 0; k <= samples; ++k) {
      double v = at(static_cast<double>(k) / samples);
      if (v > vb) vb = v, kb = k;
    }
    double lo = std::max(0.0, (kb - 1.0) / samples), hi = std::min(1.0, (kb + 1.0) / samples);
    const double g = 0.5 * (std::sqrt(5.0) - 1);
    for (int it = 0; it < 60; ++it) {
      double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
      if (at(a) > at(b))
        hi = b;
      else
        lo = a;
    }
    best = std::max({best, vb, at(0.5 * (lo + hi))});
  }
  return best;
}

struct ZeroBoundTrial {
  int count = 0;
  double log_ratio = 0;  ///< log(sup_2Q |f| / sup_Q |f|)
};

namespace detail {
inline ZeroBoundTrial zero_trial(int degree, std::uint64_t seed, std::uint64_t k) {
  Rng rng(derive_seed(seed, "zero-trial", k));
  std::uniform_real_distribution<double> U(0, 1);
  std::vector<cplx> c(degree + 1);
  for (auto& v : c) v = complex_gaussian(rng);
  auto f = [c](cplx z) {
    cplx s = 0;
    for (std::size_t i = c.size(); i-- > 0;) s = s * z + c[i];
    return s;
  };
  Square Q{cplx(2 * U(rng) - 1, 2 * U(rng) - 1), 0.3 + 0.9 * U(rng)};
  ZeroBoundTrial t;
  auto zc = zero_set_count(f, Q);
  Q = zc.used;
  t.count = zc.count;
  t.log_ratio = std::log(sup_on_square(f, Square{Q.center, 2 * Q.side}) / sup_on_square(f, Q));
  return t;
}
}  // namespace detail

struct ZeroBoundFit {
  double C = 0;        ///< global constant: safety * max count / log ratio
  double raw = 0;      ///< max count / log ratio on the calibration trials
  double safety = 1.5;
  int trials = 0;
};

/// Calibrates C in count <= C log(sup_2Q / sup_Q) on random polynomials and random squares.
inline ZeroBoundFit fit_zero_bound(int trials, int degree, std::uint64_t seed, double safety = 1.5) {
  ZeroBoundFit fit;
  fit.trials = trials;
  fit.safety = safety;
  auto t = parallel_map<ZeroBoundTrial>(static_cast<std::size_t>(trials), [&](std::size_t k) { return detail::zero_trial(degree, seed, k); });
  for (const auto& x : t)
    if (x.count > 0) fit.raw = std::max(fit.raw, x.count / x.log_ratio);
  fit.C = safety * fit.raw;
  return fit;
}

struct ZeroBoundCheck {
  int trials = 0, violations = 0, with_zeros = 0;
  double worst = 0;  ///< max count / log ratio
};

inline ZeroBoundCheck check_zero_bound(double C, int trials, int degree, std::uint64_t seed) {
  ZeroBoundCheck chk;
  chk.trials = trials;
  auto t = parallel_map<ZeroBoundTrial>(static_cast<std::size_t>(trials), [&](std::size_t k) { return detail::zero_trial(degree, seed, k); });
  for (const auto& x : t) {
    if (x.count > 0) {
      ++chk.with_zeros;
      chk.worst = std::max(chk.worst, x.count / x.log_ratio);
    }
    if (x.count > C * x.log_ratio) ++chk.violations;
  }
  return chk;
}

// ---------------------------------------------------------------------------
// Sublevel sets

namespace detail {
/// sup |f| on the pullback circle |phi_z(w)| = r (n = 1), sampled and refined by golden section.
inline double sup_on_circle(const Domain& d, const Function& f, const Point& z, double r) {
  Point zb = d.to_ball(z);
  auto at = [&](double t) { return std::abs(f(d.from_ball(ball_automorphism(zb, Point{std::polar(r, t), 0.0}, 1)))); };
  const int N = 4096;
  int kb = 0;
  double vb = -1;
  for (int k = 0; k < N; ++k) {
    double v = at(2 * pi * k / N);
    if (v > vb) vb = v, kb = k;
  }
  double lo = 2 * pi * (kb - 1) / N, hi = 2 * pi * (kb + 1) / N;
  const double g = 0.5 * (std::sqrt(5.0) - 1);
  for (int it = 0; it < 60; ++it) {
    double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
    if (at(a) > at(b))
      hi = b;
    else
      lo = a;
  }
  return std::max(vb, at(0.5 * (lo + hi)));
}
}  // namespace detail

/**
 * @brief |F_a| with F_a = Y(z, r) cap {|f| <= e^-a} after normalizing sup_{Y(z, r)} |f| = 1 (n = 1).
 * Area by the edge-aware masked rule in the automorphism coordinates.
 */
inline double sublevel_measure(const Domain& d, const Function& f, const Point& z, double r, double a) {
  if (d.n != 1) throw BergmanError("sublevel_measure: planar domains only");
  if (!(r > 0 && r < 1)) throw BergmanError("sublevel_measure: r must lie in (0, 1)");
  const double sup = detail::sup_on_circle(d, f, z, r);
  if (!(sup > 0) || !std::isfinite(sup)) throw BergmanError("sublevel_measure: normalization failure (sup is zero or not finite)");
  const Point zb = d.to_ball(z);
  const double jl = 1.0 / d.to_ball_jacobian(), level = std::exp(-a);
  auto map = [&](const Point& u) { return d.from_ball(ball_automorphism(zb, u, 1)); };
  auto g = [&](const Point& u) { return jl * ball_automorphism_jacobian(zb, u, 1); };
  auto in = [&](const Point& u) { return std::abs(f(map(u))) / sup <= level; };
  return detail::masked_polar_integral(1, 0.0, r, PullbackSpec{32, 4, 256, 1, 0.4}, g, in, 0.0).first;
}

struct SublevelDecay {
  std::vector<double> a, area;
  LinearFit fit;      ///< log(area) against a
  double rate = 0;    ///< -slope
};

inline SublevelDecay sublevel_decay(const Domain& d, const Function& f, const Point& z, double r, const std::vector<double>& avals) {
  SublevelDecay s;
  std::vector<double> x, y;
  for (double a : avals) {
    double v = sublevel_measure(d, f, z, r, a);
    s.a.push_back(a);
    s.area.push_back(v);
    if (v > 0) {
      x.push_back(a);
      y.push_back(std::log(v));
    }
  }
  if (x.size() < 2) throw BergmanError("sublevel_decay: fewer than two nonempty sublevel sets");
  s.fit = linear_fit(x, y);
  s.rate = -s.fit.slope;
  return s;
}

// ---------------------------------------------------------------------------
// Lower-dimensional sets

/**
 * @brief Union of circles |z| = tanh(k spacing) and radial segments between consecutive circles,
 * ceil(pi sinh(2t) / spacing) of them per ring, down to 1 - |z| >= delta_min.
 */
inline RegionSet hyperbolic_curve_net(double spacing, double delta_min) {
  std::vector<Curve> cs;
  std::vector<double> rad{0.0};
  for (int k = 1;; ++k) {
    double rho = std::tanh(k * spacing);
    if (1 - rho < delta_min) break;
    rad.push_back(rho);
    cs.push_back(circle(0.0, rho));
  }
  for (std::size_t k = 0; k + 1 < rad.size(); ++k) {
    double t = std::atanh(std::max(rad[k], 1e-300));
    int m = std::max(6, static_cast<int>(std::ceil(pi * std::sinh(2 * t) / spacing)));
    for (int j = 0; j < m; ++j) {
      cplx e = std::polar(1.0, 2 * pi * (j + 0.5 * (k % 2)) / m);
      cs.push_back(segment(rad[k] * e, rad[k + 1] * e));
    }
  }
  return curve_union(std::move(cs), "curve-net");
}

struct LowdimDensity {
  std::vector<double> values;
  double infimum = std::numeric_limits<double>::infinity();
  std::size_t argmin = 0, tested = 0;
};

namespace detail {
inline std::array<double, 4> curve_bbox(const Curve& c) {
  std::array<double, 4> b{1e300, -1e300, 1e300, -1e300};
  if (c.kind == CurveKind::Circle) return {c.a.real() - c.radius, c.a.real() + c.radius, c.a.imag() - c.radius, c.a.imag() + c.radius};
  const int N = c.kind == CurveKind::Segment ? 1 : 256;
  double step = 0;
  cplx prev = c(0.0);
  for (int k = 0; k <= N; ++k) {
    cplx z = c(static_cast<double>(k) / N);
    step = std::max(step, std::abs(z - prev));
    prev = z;
    b = {std::min(b[0], z.real()), std::max(b[1], z.real()), std::min(b[2], z.imag()), std::max(b[3], z.imag())};
  }
  return {b[0] - step, b[1] + step, b[2] - step, b[3] + step};
}

inline double hausdorff_in_box(const RegionSet& E, const std::vector<std::array<double, 4>>& boxes, const std::array<double, 4>& q,
                               const std::function<bool(const Point&)>& inside) {
  if (E.kind == RegionKind::PointCloud) return curve_measure_in(E, inside);
  double s = 0;
  for (std::size_t i = 0; i < E.curves.size(); ++i) {
    const auto& b = boxes[i];
    if (b[1] < q[0] || b[0] > q[1] || b[3] < q[2] || b[2] > q[3]) continue;
    s += arc_length_rule_where(E.curves[i], inside).total();
  }
  return s;
}

inline std::vector<std::array<double, 4>> bboxes(const RegionSet& E) {
  std::vector<std::array<double, 4>> b;
  for (const auto& c : E.curves) b.push_back(curve_bbox(c));
  return b;
}

inline void check_pairing(const RegionSet& E) {
  bool ok = (E.kind == RegionKind::CurveUnion && E.nu == 1) || (E.kind == RegionKind::PointCloud && E.nu == 0) ||
            (E.kind == RegionKind::Predicate && E.nu == 2);
  if (!ok) throw BergmanError("lower-dimensional density: unsupported nu / representation pairing");
}
}  // namespace detail

/**
 * @brief Kobayashi-ball condition (n = 1): H^nu(E cap Y(w, r)) / |Y(w, r)|^{nu/2} over the centers.
 * Area sets (nu = 2) go through the relative-density scan.
 */
inline LowdimDensity lowdim_density_kobayashi(const Domain& d, const RegionSet& E, double r, const std::vector<Point>& centers,
                                              const DensityOptions& dopt = {}) {
  if (d.n != 1) throw BergmanError("lowdim_density_kobayashi: planar domains only");
  detail::check_pairing(E);
  LowdimDensity out;
  out.tested = centers.size();
  if (E.kind == RegionKind::Predicate) {
    auto rep = relative_density(d, E, r, centers, dopt);
    for (const auto& row : rep.rows) out.values.push_back(row.ratio);
  } else {
    auto boxes = detail::bboxes(E);
    out.values = parallel_map<double>(centers.size(), [&](std::size_t i) {
      Point a = d.to_ball(centers[i]);
      double a2 = norm2(a), den = 1 - r * r * a2;
      cplx c = ((1 - r * r) / den) * a[0];
      double h = r * (1 - a2) / den;
      // bounding box of the Euclidean disc Y(w, r) in the domain coordinates
      Point lo = d.from_ball(Point{c - cplx(h, h), 0.0}), hi = d.from_ball(Point{c + cplx(h, h), 0.0});
      std::array<double, 4> q{std::min(lo[0].real(), hi[0].real()), std::max(lo[0].real(), hi[0].real()), std::min(lo[0].imag(), hi[0].imag()),
                              std::max(lo[0].imag(), hi[0].imag())};
      const Point z = centers[i];
      double H = detail::hausdorff_in_box(E, boxes, q, [&](const Point& w) { return d.contains(w) && kobayashi_exact(d, z, w) < std::atanh(r); });
      return H / std::pow(kobayashi_ball_volume(d, z, r), E.nu / 2);
    });
  }
  for (std::size_t i = 0; i < out.values.size(); ++i)
    if (out.values[i] < out.infimum) {
      out.infimum = out.values[i];
      out.argmin = i;
    }
  return out;
}

struct WhitneyCube {
  double x0 = 0, y0 = 0, side = 0, dist = 0;
};

/**
 * @brief Maximal dyadic cubes Q of the bounding square with side <= r dist(Q, complement), keeping
 * those with dist >= delta_min. The domain must be convex (dist is the
 * smallest corner value of delta).
 */
inline std::vector<WhitneyCube> whitney_cubes(const Domain& d, double r, double delta_min) {
  if (d.n != 1) throw BergmanError("whitney_cubes: planar domains only");
  double x0 = d.box_lo[0], y0 = d.box_lo[1];
  double side = std::max(d.box_hi[0] - d.box_lo[0], d.box_hi[1] - d.box_lo[1]);
  std::vector<WhitneyCube> out;
  std::function<void(double, double, double)> rec = [&](double x, double y, double s) {
    double dist = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 4; ++c) {
      Point p{cplx(x + s * (c & 1), y + s * (c >> 1)), 0.0};
      dist = std::min(dist, d.contains(p) ? delta_of(d, p) : 0.0);
    }
    if (s <= r * dist) {
      if (dist >= delta_min) out.push_back({x, y, s, dist});
      return;
    }
    if (s < 0.25 * r * delta_min) return;
    double h = 0.5 * s;
    rec(x, y, h);
    rec(x + h, y, h);
    rec(x, y + h, h);
    rec(x + h, y + h, h);
  };
  rec(x0, y0, side);
  return out;
}

/// Euclidean condition: H^nu(E cap Q) / side^nu over the Whitney cubes.
inline LowdimDensity lowdim_density_whitney(const Domain& d, const RegionSet& E, double r, double delta_min) {
  detail::check_pairing(E);
  auto cubes = whitney_cubes(d, r, delta_min);
  LowdimDensity out;
  out.tested = cubes.size();
  auto boxes = detail::bboxes(E);
  out.values = parallel_map<double>(cubes.size(), [&](std::size_t i) {
    const auto& Q = cubes[i];
    auto in = [&](const Point& w) {
      double x = w[0].real() - Q.x0, y = w[0].imag() - Q.y0;
      return x >= 0 && x < Q.side && y >= 0 && y < Q.side;
    };
    if (E.kind == RegionKind::Predicate) {
      int hit = 0;
      const int m = 32;
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) hit += E.contains(Point{cplx(Q.x0 + Q.side * (a + 0.5) / m, Q.y0 + Q.side * (b + 0.5) / m), 0.0}) ? 1 : 0;
      return static_cast<double>(hit) / (m * m);
    }
    double H = detail::hausdorff_in_box(E, boxes, {Q.x0, Q.x0 + Q.side, Q.y0, Q.y0 + Q.side}, in);
    return H / std::pow(Q.side, E.nu);
  });
  for (std::size_t i = 0; i < out.values.size(); ++i)
    if (out.values[i] < out.infimum) {
      out.infimum = out.values[i];
      out.argmin = i;
    }
  return out;
}

struct LowdimCheck {
  LowdimDensity density;
  DominationRecord domination;
  bool density_pass = false;
  std::string verdict;
};

/**
 * @brief Density condition over Kobayashi balls at the centers, then the empirical domination
 * constant with ||f||_{L^p_alpha(E, H^nu)} as the curve, point or area integral.
 */
inline LowdimCheck lowdim_density_check(const Domain& d, const RegionSet& E, double r, double gamma, double p, double alpha,
                                        const std::vector<EnsembleMember>& ens, const std::vector<Point>& centers,
                                        const DensityOptions& dopt = {}) {
  detail::check_pairing(E);
  if (E.nu == 0) throw BergmanError("lowdim_density_check: nu = 0 is outside the domination statement");
  LowdimCheck c;
  c.density = lowdim_density_kobayashi(d, E, r, centers, dopt);
  c.density_pass = c.density.infimum >= gamma;
  c.domination = domination_constant(set_integral(d, E, alpha), p, ens, E.name);
  c.verdict = c.density_pass ? "density-pass" : "density-fail";
  return c;
}

}  // namespace bergman
