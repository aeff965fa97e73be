#pragma once

/**
 * @file pipeline.hpp
 * @brief Config-driven experiment runner: JSON schema checks, pipelines over every module, CSV
 * tables and a deterministic summary document.
 */

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "bergman/carleman.hpp"
#include "bergman/experiments.hpp"

namespace bergman {

using json = nlohmann::json;

/// Malformed or inconsistent configuration (exit status 2).
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Time budget exhausted (exit status 3).
struct BudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Budget {
 public:
  explicit Budget(double seconds = 0) : limit_(seconds), start_(std::chrono::steady_clock::now()) {}
  double elapsed() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }
  void check(const std::string& where) const {
    if (limit_ > 0 && elapsed() > limit_) throw BudgetExceeded("time budget of " + fmt(limit_) + " s exhausted in " + where);
  }
  double limit() const { return limit_; }

 private:
  static std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  }
  double limit_;
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Schema reading

/// Reads one JSON object; keys never read are reported by finish().
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(path_ + ": expected an object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }
  const std::string& path() const { return path_; }

  const json& raw(const std::string& k) {
    used_.insert(k);
    if (!j_.contains(k)) throw SchemaError(path_ + ": missing key '" + k + "'");
    return j_.at(k);
  }
  Reader obj(const std::string& k) { return Reader(raw(k), path_ + "." + k); }

  double num(const std::string& k) {
    const auto& v = raw(k);
    if (!v.is_number()) throw SchemaError(path_ + "." + k + ": expected a number");
    return v.get<double>();
  }
  double num(const std::string& k, double def) { return has(k) ? num(k) : (used_.insert(k), def); }
  int integer(const std::string& k) {
    const auto& v = raw(k);
    if (!v.is_number_integer()) throw SchemaError(path_ + "." + k + ": expected an integer");
    return v.get<int>();
  }
  int integer(const std::string& k, int def) { return has(k) ? integer(k) : (used_.insert(k), def); }
  std::uint64_t seed(const std::string& k) {
    const auto& v = raw(k);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw SchemaError(path_ + "." + k + ": expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }
  bool flag(const std::string& k, bool def) {
    if (!has(k)) return def;
    const auto& v = raw(k);
    if (!v.is_boolean()) throw SchemaError(path_ + "." + k + ": expected a boolean");
    return v.get<bool>();
  }
  std::string str(const std::string& k) {
    const auto& v = raw(k);
    if (!v.is_string()) throw SchemaError(path_ + "." + k + ": expected a string");
    return v.get<std::string>();
  }
  std::string str(const std::string& k, const std::string& def) { return has(k) ? str(k) : (used_.insert(k), def); }
  std::vector<double> nums(const std::string& k) {
    const auto& v = raw(k);
    if (!v.is_array() || v.empty()) throw SchemaError(path_ + "." + k + ": expected a nonempty array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw SchemaError(path_ + "." + k + ": expected numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  std::vector<double> nums(const std::string& k, std::vector<double> def) { return has(k) ? nums(k) : (used_.insert(k), def); }
  std::vector<int> ints(const std::string& k) {
    std::vector<int> out;
    for (double v : nums(k)) {
      if (v != std::floor(v)) throw SchemaError(path_ + "." + k + ": expected integers");
      out.push_back(static_cast<int>(v));
    }
    return out;
  }
  std::vector<int> ints(const std::string& k, std::vector<int> def) { return has(k) ? ints(k) : (used_.insert(k), def); }

  /// Complex point: [re, im] (n = 1) or [re1, im1, re2, im2].
  Point point(const json& v, const std::string& where) const {
    if (!v.is_array() || (v.size() != 2 && v.size() != 4)) throw SchemaError(where + ": expected [re, im] or [re1, im1, re2, im2]");
    for (const auto& x : v)
      if (!x.is_number()) throw SchemaError(where + ": expected numbers");
    Point p{cplx(v[0].get<double>(), v[1].get<double>()), 0.0};
    if (v.size() == 4) p[1] = cplx(v[2].get<double>(), v[3].get<double>());
    return p;
  }
  Point point(const std::string& k) { return point(raw(k), path_ + "." + k); }
  std::vector<Point> points(const std::string& k) {
    const auto& v = raw(k);
    if (!v.is_array()) throw SchemaError(path_ + "." + k + ": expected an array of points");
    std::vector<Point> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(point(v[i], path_ + "." + k + "[" + std::to_string(i) + "]"));
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw SchemaError(path_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Tables and reports

/// Column layout of every CSV table the runner writes (kept in sync with share/csv_schema.json).
inline const std::map<std::string, std::vector<std::string>>& csv_columns() {
  static const std::map<std::string, std::vector<std::string>> cols = {
      {"kernel", {"alpha", "degree", "max_abs_error", "gram_condition", "gram_rel_error"}},
      {"kobayashi", {"z_re", "z_im", "w_re", "w_im", "distance", "lower", "upper", "exact", "volume", "volume_closed_form"}},
      {"density", {"center_re", "center_im", "center2_re", "center2_im", "delta", "ratio", "stderr"}},
      {"berezin", {"center_re", "center_im", "center2_re", "center2_im", "delta", "value"}},
      {"domination", {"degree", "supremum", "witness"}},
      {"toeplitz", {"member", "ratio"}},
      {"lowdim", {"center_re", "center_im", "density"}},
      {"sampling", {"variant", "points", "degree", "supremum", "witness"}},
      {"carleson", {"spacing", "atoms", "norm", "bound", "disjoint", "union_audit"}},
      {"reverse_carleson", {"degree", "constant", "witness", "lipschitz_C", "lemma_C", "domination_G", "K_fit", "s_max", "verdict"}},
      {"three_sphere", {"gamma", "member", "N", "ratio", "bound_fitted", "bound_chain", "violation"}},
      {"zeros", {"phase", "trials", "with_zeros", "C", "worst", "violations"}},
      {"sublevel", {"k", "a", "area", "closed_form"}},
  };
  return cols;
}

/// Fixed-precision CSV table checked against the column registry.
class Table {
 public:
  explicit Table(std::string kind) : kind_(std::move(kind)) {
    auto it = csv_columns().find(kind_);
    if (it == csv_columns().end()) throw BergmanError("Table: unregistered table kind " + kind_);
    cols_ = it->second;
  }
  template <class... T>
  void row(const T&... v) {
    if (sizeof...(T) != cols_.size()) throw BergmanError("Table: wrong column count for " + kind_);
    std::ostringstream os;
    os.precision(12);
    bool first = true;
    ((os << (first ? "" : ",") << cell(v), first = false), ...);
    rows_.push_back(os.str());
  }
  std::string str() const {
    std::string s;
    for (std::size_t i = 0; i < cols_.size(); ++i) s += (i ? "," : "") + cols_[i];
    s += "\n";
    for (const auto& r : rows_) s += r + "\n";
    return s;
  }
  const std::string& kind() const { return kind_; }

 private:
  template <class V>
  static std::string cell(const V& v) {
    std::ostringstream os;
    os.precision(12);
    if constexpr (std::is_same_v<V, bool>)
      os << (v ? 1 : 0);
    else
      os << v;
    return os.str();
  }
  std::string kind_;
  std::vector<std::string> cols_;
  std::vector<std::string> rows_;
};

struct Assertion {
  std::string metric, op;
  double value = 0, actual = 0;
  bool pass = true;
};

struct PipelineResult {
  std::string id, op;
  json metrics = json::object();
  json witness = json::object();
  std::vector<Assertion> assertions;
  std::vector<Table> tables;
  double seconds = 0;
};

struct RunResult {
  std::string name, config_hash;
  std::uint64_t seed = 0;
  std::vector<PipelineResult> pipelines;
  bool pass = true;
  json summary() const;
};

inline std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Deterministic summary: config hash, metrics, witnesses and assertion outcomes (no timings).
inline json RunResult::summary() const {
  json s;
  s["name"] = name;
  s["config_hash"] = config_hash;
  s["seed"] = seed;
  s["status"] = pass ? "pass" : "fail";
  json ps = json::array();
  for (const auto& p : pipelines) {
    json j;
    j["id"] = p.id;
    j["op"] = p.op;
    j["metrics"] = p.metrics;
    if (!p.witness.empty()) j["witness"] = p.witness;
    json as = json::array();
    for (const auto& a : p.assertions) as.push_back({{"metric", a.metric}, {"op", a.op}, {"value", a.value}, {"actual", a.actual}, {"pass", a.pass}});
    j["assertions"] = as;
    ps.push_back(j);
  }
  s["pipelines"] = ps;
  return s;
}

// ---------------------------------------------------------------------------
// Config pieces

namespace cfg {

inline json point_json(const Point& p) {
  if (p[1] == cplx(0)) return json::array({p[0].real(), p[0].imag()});
  return json::array({p[0].real(), p[0].imag(), p[1].real(), p[1].imag()});
}

inline Domain domain(Reader r) {
  std::string k = r.str("kind");
  Domain d;
  if (k == "disc")
    d = unit_disc();
  else if (k == "ball")
    d = unit_ball();
  else if (k == "ellipsoid") {
    int n = r.integer("n", 2);
    if (n != 1 && n != 2) throw SchemaError(r.path() + ".n: must be 1 or 2");
    d = ellipsoid(n, r.num("a1"), r.num("a2", 1.0));
  } else
    throw SchemaError(r.path() + ".kind: unknown domain '" + k + "'");
  r.finish();
  return d;
}

/// Point sets: hyperbolic lattice with optional thinning and sector removal.
inline std::vector<Point> points(Reader r) {
  std::string k = r.str("kind");
  if (k != "lattice") throw SchemaError(r.path() + ".kind: unknown point set '" + k + "'");
  auto pts = hyperbolic_lattice(r.num("spacing"), r.num("delta_min"), r.num("phase", 0.0));
  if (r.flag("thin", false)) pts = thin_every_other(pts);
  if (r.has("remove_sector")) {
    Reader s = r.obj("remove_sector");
    pts = remove_sector(pts, s.num("theta"), s.num("half_width"), s.num("rmin"));
    s.finish();
  }
  r.finish();
  return pts;
}

inline RegionSet set(const Domain& d, Reader r, const std::map<std::string, RegionSet>& named) {
  std::string k = r.str("kind");
  RegionSet e;
  if (k == "whole")
    e = whole_domain(d);
  else if (k == "empty")
    e = empty_set();
  else if (k == "annulus")
    e = annulus(r.num("r0"), r.num("r1", 1.0));
  else if (k == "halfspace") {
    Point v = r.point("normal");
    if (!(abs(v) > 0)) throw SchemaError(r.path() + ".normal: must be nonzero");
    e = halfspace((1.0 / abs(v)) * v, r.num("offset", 0.0));
  } else if (k == "complement") {
    std::string of = r.str("of");
    auto it = named.find(of);
    if (it == named.end()) throw SchemaError(r.path() + ".of: unknown set '" + of + "'");
    e = complement(d, it->second);
  } else if (k == "curve_net")
    e = hyperbolic_curve_net(r.num("spacing"), r.num("delta_min"));
  else if (k == "radii") {
    int m = r.integer("count");
    if (m < 1) throw SchemaError(r.path() + ".count: must be positive");
    std::vector<Curve> cs;
    for (int j = 0; j < m; ++j) cs.push_back(segment(0.0, std::polar(1.0, 2 * pi * j / m)));
    e = curve_union(std::move(cs), "radii");
  } else if (k == "circles") {
    std::vector<Curve> cs;
    for (double rad : r.nums("radii")) cs.push_back(circle(0.0, rad));
    e = curve_union(std::move(cs), "circles");
  } else if (k == "points")
    e = point_cloud(points(r.obj("points")), "points");
  else
    throw SchemaError(r.path() + ".kind: unknown set '" + k + "'");
  if (e.kind != RegionKind::Predicate && d.kind != DomainKind::UnitDisc) throw SchemaError(r.path() + ": curve and point sets need the disc");
  r.finish();
  return e;
}

inline std::vector<Point> centers(const Domain& d, Reader r, std::uint64_t seed) {
  std::string k = r.str("kind");
  std::vector<Point> c;
  if (k == "collar") {
    c = collar_centers(d, r.integer("rays", default_rays(d)), r.integer("jmin", 1), r.integer("jmax"), r.has("seed") ? r.seed("seed") : seed);
  } else if (k == "scan") {
    c = carleson_scan_centers(d, r.integer("jmax"), r.has("seed") ? r.seed("seed") : seed);
  } else if (k == "approach") {
    double t = r.num("theta");
    for (double del : r.nums("deltas")) {
      if (!(del > 0 && del < 1)) throw SchemaError(r.path() + ".deltas: values must lie in (0, 1)");
      Point p = d.from_ball(Point{std::polar(1.0, t), 0.0});
      c.push_back((1 - del) * p);
    }
  } else if (k == "list") {
    c = r.points("points");
  } else
    throw SchemaError(r.path() + ".kind: unknown center grid '" + k + "'");
  r.finish();
  if (c.empty()) throw SchemaError(r.path() + ": empty center grid");
  for (const auto& z : c)
    if (!d.contains(z)) throw SchemaError(r.path() + ": center outside the domain");
  return c;
}

inline EnsembleSpec ensemble(Reader r, std::uint64_t seed, double alpha) {
  EnsembleSpec s;
  s.degree = r.integer("degree", 20);
  s.random_count = r.integer("random_count", 10);
  if (r.has("kernel_points")) s.kernel_points = r.points("kernel_points");
  s.blaschke_count = r.integer("blaschke_count", 0);
  s.blaschke_zeros = r.integer("blaschke_zeros", 3);
  s.seed = r.has("seed") ? r.seed("seed") : seed;
  s.alpha = alpha;
  r.finish();
  return s;
}

inline Shape shape(Reader r) {
  std::string k = r.str("kind");
  Shape s;
  if (k == "disc")
    s = shape_disc(r.num("cx", 0.0), r.num("cy", 0.0), r.num("r"));
  else if (k == "ellipse")
    s = shape_ellipse(r.num("cx", 0.0), r.num("cy", 0.0), r.num("a"), r.num("b"));
  else if (k == "rect")
    s = shape_rect(r.num("x0"), r.num("x1"), r.num("y0"), r.num("y1"));
  else if (k == "polygon") {
    std::vector<std::array<double, 2>> v;
    for (const auto& p : r.raw("vertices")) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) throw SchemaError(r.path() + ".vertices: expected [x, y] pairs");
      v.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    if (v.size() < 3) throw SchemaError(r.path() + ".vertices: need at least three vertices");
    s = shape_polygon(std::move(v));
  } else
    throw SchemaError(r.path() + ".kind: unknown shape '" + k + "'");
  r.finish();
  return s;
}

}  // namespace cfg

// ---------------------------------------------------------------------------
// Pipelines

struct RunContext {
  Domain domain;
  std::uint64_t seed = 0;
  std::map<std::string, RegionSet> sets;
  const Budget* budget = nullptr;
};

namespace detail {

inline const RegionSet& named_set(const RunContext& ctx, Reader& r, const std::string& key = "set") {
  std::string s = r.str(key);
  auto it = ctx.sets.find(s);
  if (it == ctx.sets.end()) throw SchemaError(r.path() + "." + key + ": unknown set '" + s + "'");
  return it->second;
}

inline json center_json(const Point& z) { return cfg::point_json(z); }

inline void run_kernel(RunContext& ctx, Reader& r, PipelineResult& out) {
  auto alphas = r.nums("alpha", {0.0});
  int D = r.integer("degree", ctx.domain.n == 1 ? 200 : 40);
  int grid = r.integer("grid", 12);
  double rmax = r.num("radius", 0.9);
  Table t("kernel");
  double worst = 0;
  for (double a : alphas) {
    ctx.budget->check("kernel");
    SeriesOptions so;
    so.degree = D;
    so.seed = ctx.seed;
    auto m = build_series_kernel(ctx.domain, a, so);
    auto exact = closed_form_kernel(ctx.domain, a);
    std::vector<Point> pts;
    for (int i = 0; i < grid; ++i)
      for (int j = 0; j < grid; ++j) {
        Point z{std::polar(rmax * (i + 1) / grid, 2 * pi * j / grid + 0.1 * i), 0.0};
        if (ctx.domain.n == 2) z = Point{std::sqrt(0.5) * z[0], std::sqrt(0.5) * std::conj(z[0])};
        if (ctx.domain.contains(z)) pts.push_back(z);
      }
    auto err = parallel_map<double>(pts.size(), [&](std::size_t i) {
      double e = 0;
      for (std::size_t j = 0; j < pts.size(); j += 3) e = std::max(e, std::abs(m(pts[i], pts[j]) - exact(pts[i], pts[j])));
      return e;
    });
    double e = *std::max_element(err.begin(), err.end());
    worst = std::max(worst, e);
    t.row(a, D, e, m.gram_condition, m.gram_rel_error);
    std::ostringstream key;
    key << "max_abs_error_alpha" << a;
    out.metrics[key.str()] = e;
  }
  out.metrics["max_abs_error"] = worst;
  out.tables.push_back(t);
}

inline void run_kobayashi(RunContext& ctx, Reader& r, PipelineResult& out) {
  const auto& d = ctx.domain;
  std::vector<std::pair<Point, Point>> pairs;
  if (r.has("pairs")) {
    for (const auto& pr : r.raw("pairs")) {
      if (!pr.is_array() || pr.size() != 2) throw SchemaError(r.path() + ".pairs: expected [z, w] entries");
      pairs.push_back({r.point(pr[0], r.path() + ".pairs"), r.point(pr[1], r.path() + ".pairs")});
    }
  } else {
    Rng rng(derive_seed(ctx.seed, "kobayashi-pairs"));
    int cnt = r.integer("random_pairs", 8);
    for (int k = 0; k < cnt; ++k) {
      Point a = uniform_in_ball(rng, d.n, 0.95), b = uniform_in_ball(rng, d.n, 0.95);
      pairs.push_back({d.from_ball(a), d.from_ball(b)});
    }
  }
  double rad = r.num("r", 0.5);
  for (const auto& [z, w] : pairs)
    if (!d.contains(z) || !d.contains(w)) throw SchemaError(r.path() + ": point outside the domain");
  Table t("kobayashi");
  double worst_vol = 0;
  for (const auto& [z, w] : pairs) {
    auto kd = kobayashi_distance(d, z, w);
    auto vol = ball_volume(d, z, rad);
    double cf = d.linear_image_of_ball() ? kobayashi_ball_volume(d, z, rad) : std::numeric_limits<double>::quiet_NaN();
    if (d.linear_image_of_ball()) worst_vol = std::max(worst_vol, std::abs(vol.value - cf) / cf);
    t.row(z[0].real(), z[0].imag(), w[0].real(), w[0].imag(), kd.value(), kd.lower, kd.upper, kd.exact, vol.value, cf);
  }
  out.metrics["pairs"] = pairs.size();
  out.metrics["volume_max_rel_error"] = worst_vol;
  out.tables.push_back(t);
}

inline void run_density(RunContext& ctx, Reader& r, PipelineResult& out) {
  const auto& E = named_set(ctx, r);
  auto c = cfg::centers(ctx.domain, r.obj("centers"), ctx.seed);
  DensityOptions o;
  o.samples = r.integer("samples", 2000);
  o.target_stderr = r.num("target_stderr", 0.02);
  o.seed = derive_seed(ctx.seed, "density:" + out.id);
  auto rep = relative_density(ctx.domain, E, r.num("r", 0.5), c, o);
  Table t("density");
  for (const auto& row : rep.rows) t.row(row.center[0].real(), row.center[0].imag(), row.center[1].real(), row.center[1].imag(), row.delta, row.ratio, row.stderr_);
  out.metrics["density_inf"] = rep.infimum;
  out.metrics["density_ci_lo"] = rep.ci_lo;
  out.metrics["density_ci_hi"] = rep.ci_hi;
  out.witness["center"] = center_json(rep.rows[rep.argmin].center);
  out.witness["delta"] = rep.rows[rep.argmin].delta;
  out.tables.push_back(t);
}

inline void run_berezin(RunContext& ctx, Reader& r, PipelineResult& out) {
  const auto& E = named_set(ctx, r);
  double p = r.num("p", 2.0), alpha = r.num("alpha", 0.0);
  auto c = cfg::centers(ctx.domain, r.obj("centers"), ctx.seed);
  auto m = closed_form_kernel(ctx.domain, alpha);
  auto s = berezin_infimum(m, E, p, alpha, c);
  Table t("berezin");
  for (std::size_t i = 0; i < c.size(); ++i) t.row(c[i][0].real(), c[i][0].imag(), c[i][1].real(), c[i][1].imag(), s.delta[i], s.value[i]);
  out.metrics["berezin_inf"] = s.infimum;
  out.witness["center"] = center_json(c[s.argmin]);
  out.witness["delta"] = s.delta[s.argmin];
  out.tables.push_back(t);
}

inline void run_dominate(RunContext& ctx, Reader& r, PipelineResult& out) {
  const auto& E = named_set(ctx, r);
  double p = r.num("p", 2.0), alpha = r.num("alpha", 0.0);
  auto spec = cfg::ensemble(r.obj("ensemble"), derive_seed(ctx.seed, "ensemble:" + out.id), alpha);
  auto degrees = r.ints("degrees", {spec.degree});
  auto si = set_integral(ctx.domain, E, alpha);
  DominationTrend tr;
  Table t("domination");
  for (int D : degrees) {
    ctx.budget->check("dominate degree " + std::to_string(D));
    auto one = domination_trend(ctx.domain, si, p, spec, {D});
    tr.degrees.push_back(D);
    tr.suprema.push_back(one.suprema[0]);
    tr.witnesses.push_back(one.witnesses[0]);
    t.row(D, one.suprema[0], one.witnesses[0]);
  }
  tr.monotone_increasing = true;
  for (std::size_t i = 1; i < tr.suprema.size(); ++i)
    if (!(tr.suprema[i] > tr.suprema[i - 1])) tr.monotone_increasing = false;
  auto [lo, hi] = std::minmax_element(tr.suprema.begin(), tr.suprema.end());
  out.metrics["domination_first"] = tr.suprema.front();
  out.metrics["domination_last"] = tr.suprema.back();
  out.metrics["domination_relative_change"] = (*hi - *lo) / *lo;
  out.metrics["domination_growth"] = tr.suprema.back() / tr.suprema.front();
  out.metrics["monotone_increasing"] = tr.monotone_increasing ? 1 : 0;
  out.witness["member"] = tr.witnesses.back();
  out.witness["degree"] = tr.degrees.back();
  out.tables.push_back(t);
}

inline void run_toeplitz(RunContext& ctx, Reader& r, PipelineResult& out) {
  const auto& E = named_set(ctx, r);
  if (E.kind != RegionKind::Predicate) throw SchemaError(r.path() + ".set: Toeplitz symbols must be area sets");
  double alpha = r.num("alpha", 0.0);
  auto spec = cfg::ensemble(r.obj("ensemble"), derive_seed(ctx.seed, "ensemble:" + out.id), alpha);
  auto ens = make_ensemble(ctx.domain, spec);
  auto tb = toeplitz_lower_bound(ctx.domain, [&](const Point& z) { return E.contains(z) ? 1.0 : 0.0; }, alpha, ens);
  Table t("toeplitz");
  for (std::size_t i = 0; i < ens.size(); ++i) t.row(ens[i].id, tb.ratios[i]);
  out.metrics["toeplitz_inf"] = tb.infimum;
  out.witness["member"] = tb.witness;
  out.tables.push_back(t);
}

inline void run_lowdim(RunContext& ctx, Reader& r, PipelineResult& out) {
  const auto& E = named_set(ctx, r);
  double p = r.num("p", 2.0), alpha = r.num("alpha", 0.0), rad = r.num("r", 0.5), gamma = r.num("gamma", 0.1);
  auto c = cfg::centers(ctx.domain, r.obj("centers"), ctx.seed);
  auto spec = cfg::ensemble(r.obj("ensemble"), derive_seed(ctx.seed, "ensemble:" + out.id), alpha);
  auto ens = make_ensemble(ctx.domain, spec);
  DensityOptions o;
  o.seed = derive_seed(ctx.seed, "lowdim:" + out.id);
  auto chk = lowdim_density_check(ctx.domain, E, rad, gamma, p, alpha, ens, c, o);
  Table t("lowdim");
  for (std::size_t i = 0; i < c.size(); ++i) t.row(c[i][0].real(), c[i][0].imag(), chk.density.values[i]);
  out.metrics["lowdim_density_inf"] = chk.density.infimum;
  out.metrics["density_pass"] = chk.density_pass ? 1 : 0;
  out.metrics["domination"] = chk.domination.supremum;
  if (r.has("whitney")) {
    Reader w = r.obj("whitney");
    auto wd = lowdim_density_whitney(ctx.domain, E, w.num("r"), w.num("delta_min"));
    w.finish();
    out.metrics["whitney_density_inf"] = wd.infimum;
    out.metrics["whitney_cubes"] = wd.tested;
  }
  out.witness["center"] = center_json(c[chk.density.argmin]);
  out.witness["member"] = chk.domination.witness;
  out.tables.push_back(t);
}

inline void run_sample(RunContext& ctx, Reader& r, PipelineResult& out) {
  double p = r.num("p", 2.0), alpha = r.num("alpha", 0.0);
  auto spec = cfg::ensemble(r.obj("ensemble"), derive_seed(ctx.seed, "ensemble:" + out.id), alpha);
  auto degrees = r.ints("degrees", {spec.degree});
  const auto& vj = r.raw("variants");
  if (!vj.is_object() || vj.empty()) throw SchemaError(r.path() + ".variants: expected a nonempty object of point sets");
  Table t("sampling");
  std::map<std::string, std::vector<double>> sup;
  for (auto it = vj.begin(); it != vj.end(); ++it) {
    auto pts = cfg::points(Reader(it.value(), r.path() + ".variants." + it.key()));
    for (int D : degrees) {
      ctx.budget->check("sample " + it.key());
      spec.degree = D;
      auto rec = point_sampling_check(ctx.domain, pts, p, alpha, make_ensemble(ctx.domain, spec));
      t.row(it.key(), pts.size(), D, rec.supremum, rec.witness);
      out.metrics["sampling_" + it.key() + "_degree" + std::to_string(D)] = rec.supremum;
      sup[it.key()].push_back(rec.supremum);
      out.witness[it.key()] = rec.witness;
    }
  }
  for (const auto& [k, v] : sup) out.metrics["sampling_" + k + "_change"] = std::abs(v.back() - v.front()) / v.front();
  if (r.has("reference")) {
    std::string ref = r.str("reference");
    if (!sup.count(ref)) throw SchemaError(r.path() + ".reference: unknown variant '" + ref + "'");
    for (const auto& [k, v] : sup)
      if (k != ref) out.metrics["sampling_" + k + "_factor"] = v.back() / sup[ref].back();
  }
  out.tables.push_back(t);
}

inline void run_reverse_carleson(RunContext& ctx, Reader& r, PipelineResult& out) {
  const auto& d = ctx.domain;
  double p = r.num("p", 2.0), alpha = r.num("alpha", 0.0), rr = r.num("r", 0.1), RR = r.num("R", 0.24);
  auto spacings = r.nums("spacings");
  double delta_min = r.num("delta_min", 2e-3);
  auto scan = cfg::centers(d, r.obj("scan_centers"), ctx.seed);
  auto dens = cfg::centers(d, r.obj("density_centers"), derive_seed(ctx.seed, "density-centers"));
  auto spec = cfg::ensemble(r.obj("ensemble"), derive_seed(ctx.seed, "ensemble:" + out.id), alpha);
  auto degrees = r.ints("degrees", {spec.degree});
  ReverseCarlesonOptions o;
  o.p = p;
  o.eps = r.num("eps", 0.1);
  o.gamma = r.num("gamma", 0.3);
  o.s = r.num("s", 0.24);
  o.q = r.num("q", 1.0);
  o.scan_centers = scan;
  o.density_centers = dens;
  o.density.samples = r.integer("density_samples", 1000);
  o.density.target_stderr = r.num("target_stderr", 0.02);
  o.density.seed = derive_seed(ctx.seed, "rc-density");
  o.lemma_members = r.integer("lemma_members", 2);
  o.lipschitz_pairs = r.integer("lipschitz_pairs", 32);
  o.seed = derive_seed(ctx.seed, "rc");
  Table tc("carleson"), tr("reverse_carleson");
  std::vector<double> norms;
  Measure finest;
  for (double h : spacings) {
    ctx.budget->check("reverse-carleson spacing");
    auto mu = sampling_measure(d, hyperbolic_lattice(h, delta_min), rr, RR, alpha);
    auto rep = carleson_norm(d, discrete_measure(mu, alpha), scan);
    norms.push_back(rep.norm);
    tc.row(h, mu.atoms.size(), rep.norm, disc_carleson_bound(RR), mu.disjoint, mu.union_audit);
    finest = discrete_measure(mu, alpha);
  }
  std::vector<double> consts;
  std::string verdict = "pass";
  bool hyp = true;
  for (int D : degrees) {
    ctx.budget->check("reverse-carleson degree " + std::to_string(D));
    spec.degree = D;
    auto rep = reverse_carleson_check(d, finest, make_ensemble(d, spec), o);
    consts.push_back(rep.constant);
    tr.row(D, rep.constant, rep.witness, rep.lipschitz_C, rep.lemma_C, rep.domination_G, rep.K_fit, rep.s_max, rep.verdict);
    out.metrics["G_density_inf"] = rep.carleson.G_density.infimum;
    out.metrics["reverse_constant_degree" + std::to_string(D)] = rep.constant;
    out.witness["member"] = rep.witness;
    out.witness["G_argmin"] = center_json(rep.carleson.G_density.rows[rep.carleson.G_density.argmin].center);
    if (rep.verdict != "pass") verdict = rep.verdict;
    hyp = hyp && rep.hypotheses;
  }
  out.metrics["carleson_norm_coarse"] = norms.front();
  out.metrics["carleson_norm_fine"] = norms.back();
  out.metrics["carleson_norm_bound"] = disc_carleson_bound(RR);
  out.metrics["carleson_refine_ratio"] = norms.back() / norms.front();
  out.metrics["reverse_constant_change"] = std::abs(consts.back() - consts.front()) / consts.front();
  out.metrics["hypotheses"] = hyp ? 1 : 0;
  out.metrics["verdict_pass"] = verdict == "pass" ? 1 : 0;
  out.tables.push_back(tc);
  out.tables.push_back(tr);
}

/// Sector of Y with angular fraction gamma (so <E>_Y = gamma up to the grid).
inline std::vector<char> sector_of_Y(const PlaneRegion& R, double gamma) {
  std::vector<char> E(R.size(), 0);
  for (std::size_t k = 0; k < R.size(); ++k) {
    if (!R.Y[k]) continue;
    double a = std::arg(R.z(k));
    if (a < 0) a += 2 * pi;
    E[k] = a < 2 * pi * gamma;
  }
  return E;
}

/**
 * @brief Random polynomials of degree 1..max_degree (scaled to the size of Y) and the powers
 * (z - c)^k with c inside E, which are small on E and make the ratio grow with the degree.
 */
inline std::vector<std::pair<std::string, std::function<cplx(cplx)>>> three_sphere_ensemble(int max_degree, int per_degree, std::uint64_t seed,
                                                                                              std::optional<cplx> peak = std::nullopt) {
  std::vector<std::pair<std::string, std::function<cplx(cplx)>>> ens;
  ens.push_back({"one", [](cplx) { return cplx(1.0); }});
  for (int k = 1; k <= max_degree; ++k) {
    for (int j = 0; j < per_degree; ++j) {
      Rng rng(derive_seed(seed, "three-sphere-poly", static_cast<std::uint64_t>(k) * 100 + j));
      std::vector<cplx> c(k + 1);
      for (int i = 0; i <= k; ++i) c[i] = complex_gaussian(rng) * std::pow(4.0, i);
      ens.push_back({"poly" + std::to_string(k) + "_" + std::to_string(j), [c](cplx z) {
                       cplx s = 0;
                       for (std::size_t i = c.size(); i-- > 0;) s = s * z + c[i];
                       return s;
                     }});
    }
    if (peak) ens.push_back({"peak" + std::to_string(k), [k, c = *peak](cplx z) { return std::pow(4.0 * (z - c), k); }});
  }
  return ens;
}

inline void run_three_sphere(RunContext& ctx, Reader& r, PipelineResult& out) {
  Shape X = cfg::shape(r.obj("X")), Y = cfg::shape(r.obj("Y"));
  double dd = r.num("d", 0.1);
  int grid = r.integer("grid", 128);
  auto gammas = r.nums("gammas");
  int maxdeg = r.integer("max_degree", 30), per = r.integer("per_degree", 1);
  auto R = build_Z(X, Y, dd, grid, derive_seed(ctx.seed, "build-Z"));
  GreenSolver S(R);
  Table t("three_sphere");
  std::vector<double> xs, ys;
  int violations = 0;
  for (double g : gammas) {
    ctx.budget->check("three-sphere gamma");
    if (!(g > 0 && g <= 1)) throw SchemaError(r.path() + ".gammas: values must lie in (0, 1]");
    auto E = sector_of_Y(R, g);
    auto w = carleman_weight(S, E);
    auto ens = three_sphere_ensemble(maxdeg, per, derive_seed(ctx.seed, "three-sphere"), std::polar(0.06, pi * g));
    auto rep = three_sphere_estimate(R, w, E, ens);
    violations += rep.violations;
    std::ostringstream key;
    key << "C_fit_gamma" << g;
    out.metrics[key.str()] = rep.C_fit;
    for (const auto& rec : rep.records) {
      t.row(g, rec.id, rec.N, rec.ratio, rec.bound_fitted, rec.bound_chain, rec.violation);
      xs.push_back((rec.N + 1) * w.S_star);
      ys.push_back(std::log(rec.ratio));
      if (rec.violation) out.witness["violation"] = {{"gamma", g}, {"member", rec.id}};
    }
  }
  auto lf = linear_fit(xs, ys);
  out.metrics["violations"] = violations;
  out.metrics["records"] = xs.size();
  out.metrics["slope"] = lf.slope;
  out.metrics["r2"] = lf.r2;
  out.tables.push_back(t);
}

inline void run_zeros(RunContext& ctx, Reader& r, PipelineResult& out) {
  int fit_trials = r.integer("fit_trials", 200), check_trials = r.integer("check_trials", 100), degree = r.integer("degree", 20);
  double safety = r.num("safety", 1.5);
  auto fit = fit_zero_bound(fit_trials, degree, derive_seed(ctx.seed, "zeros-fit"), safety);
  ctx.budget->check("zeros");
  auto chk = check_zero_bound(fit.C, check_trials, degree, derive_seed(ctx.seed, "zeros-check"));
  Table t("zeros");
  t.row("fit", fit.trials, 0, fit.C, fit.raw, 0);
  t.row("check", chk.trials, chk.with_zeros, fit.C, chk.worst, chk.violations);
  out.metrics["C"] = fit.C;
  out.metrics["raw_C"] = fit.raw;
  out.metrics["violations"] = chk.violations;
  out.metrics["worst_check_ratio"] = chk.worst;
  out.tables.push_back(t);
}

inline void run_sublevel(RunContext& ctx, Reader& r, PipelineResult& out) {
  if (ctx.domain.kind != DomainKind::UnitDisc) throw SchemaError(r.path() + ": sublevel pipeline needs the disc");
  auto ks = r.ints("ks");
  auto avals = r.nums("a");
  double rad = r.num("r", 0.6);
  Table t("sublevel");
  std::vector<double> inv, rate;
  double worst = 0;
  for (int k : ks) {
    ctx.budget->check("sublevel");
    Function f = [k](const Point& z) { return std::pow(z[0], k); };
    auto dec = sublevel_decay(ctx.domain, f, Point{}, rad, avals);
    for (std::size_t i = 0; i < dec.a.size(); ++i) {
      double cf = pi * rad * rad * std::exp(-2 * dec.a[i] / k);
      worst = std::max(worst, std::abs(dec.area[i] - cf) / cf);
      t.row(k, dec.a[i], dec.area[i], cf);
    }
    inv.push_back(1.0 / k);
    rate.push_back(dec.rate);
  }
  out.metrics["area_max_rel_error"] = worst;
  if (inv.size() >= 2) {
    auto lf = linear_fit(inv, rate);
    out.metrics["decay_slope"] = lf.slope;
    out.metrics["decay_r2"] = lf.r2;
  }
  out.tables.push_back(t);
}

inline bool compare(double a, const std::string& op, double v) {
  if (op == ">=") return a >= v;
  if (op == ">") return a > v;
  if (op == "<=") return a <= v;
  if (op == "<") return a < v;
  if (op == "==") return a == v;
  throw SchemaError("unknown comparison '" + op + "'");
}

}  // namespace detail

inline const std::map<std::string, void (*)(RunContext&, Reader&, PipelineResult&)>& pipeline_ops() {
  static const std::map<std::string, void (*)(RunContext&, Reader&, PipelineResult&)> ops = {
      {"kernel", detail::run_kernel},       {"kobayashi", detail::run_kobayashi},
      {"density", detail::run_density},     {"berezin", detail::run_berezin},
      {"dominate", detail::run_dominate},   {"toeplitz", detail::run_toeplitz},
      {"lowdim", detail::run_lowdim},       {"sample", detail::run_sample},
      {"reverse-carleson", detail::run_reverse_carleson},
      {"three-sphere", detail::run_three_sphere},
      {"zeros", detail::run_zeros},         {"sublevel", detail::run_sublevel},
  };
  return ops;
}

/// Canonical config hash (keys are sorted by the JSON object model).
inline std::string config_hash(const json& config) { return hex64(fnv1a(config.dump())); }

/**
 * @brief Runs every pipeline of a parsed config. Schema problems throw SchemaError, an exhausted
 * budget throws BudgetExceeded; failed assertions are recorded and clear RunResult::pass.
 */
inline RunResult run_config(const json& config, double budget_override = 0) {
  RunResult res;
  Reader top(config, "config");
  res.name = top.str("name");
  if (res.name.empty() || res.name.find_first_of("/\\") != std::string::npos) throw SchemaError("config.name: must be a plain nonempty name");
  res.seed = top.seed("seed");
  top.str("description", "");
  top.str("covers", "");
  double budget = top.num("budget_seconds", 0.0);
  if (budget_override > 0) budget = budget_override;
  Budget B(budget);
  res.config_hash = config_hash(config);

  RunContext ctx;
  ctx.seed = res.seed;
  ctx.budget = &B;
  ctx.domain = cfg::domain(top.obj("domain"));
  if (top.has("sets")) {
    const auto& sj = top.raw("sets");
    if (!sj.is_object()) throw SchemaError("config.sets: expected an object");
    for (auto it = sj.begin(); it != sj.end(); ++it) ctx.sets[it.key()] = cfg::set(ctx.domain, Reader(it.value(), "config.sets." + it.key()), ctx.sets);
  }
  const auto& pj = top.raw("pipelines");
  if (!pj.is_array() || pj.empty()) throw SchemaError("config.pipelines: expected a nonempty array");
  top.finish();

  // validate names before any work
  std::set<std::string> ids;
  for (std::size_t i = 0; i < pj.size(); ++i) {
    if (!pj[i].is_object() || !pj[i].contains("op") || !pj[i]["op"].is_string())
      throw SchemaError("config.pipelines[" + std::to_string(i) + "]: expected an object with an 'op' string");
    std::string op = pj[i]["op"].get<std::string>();
    if (!pipeline_ops().count(op)) throw SchemaError("config.pipelines[" + std::to_string(i) + "].op: unknown operation '" + op + "'");
    std::string id = pj[i].contains("id") && pj[i]["id"].is_string() ? pj[i]["id"].get<std::string>() : op + std::to_string(i);
    if (!ids.insert(id).second) throw SchemaError("config.pipelines: duplicate id '" + id + "'");
  }

  for (std::size_t i = 0; i < pj.size(); ++i) {
    B.check("pipeline " + std::to_string(i));
    Reader r(pj[i], "config.pipelines[" + std::to_string(i) + "]");
    PipelineResult pr;
    pr.op = r.str("op");
    pr.id = r.str("id", pr.op + std::to_string(i));
    std::vector<json> asserts;
    if (r.has("assert")) {
      const auto& aj = r.raw("assert");
      if (!aj.is_array()) throw SchemaError(r.path() + ".assert: expected an array");
      for (const auto& a : aj) asserts.push_back(a);
    }
    auto t0 = std::chrono::steady_clock::now();
    try {
      pipeline_ops().at(pr.op)(ctx, r, pr);
    } catch (const BergmanError& e) {
      throw SchemaError(r.path() + ": " + e.what());
    }
    pr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.finish();
    for (std::size_t k = 0; k < asserts.size(); ++k) {
      Reader a(asserts[k], r.path() + ".assert[" + std::to_string(k) + "]");
      Assertion as;
      as.metric = a.str("metric");
      as.op = a.str("op");
      as.value = a.num("value");
      a.finish();
      if (!pr.metrics.contains(as.metric)) throw SchemaError(a.path() + ".metric: pipeline has no metric '" + as.metric + "'");
      as.actual = pr.metrics[as.metric].get<double>();
      as.pass = detail::compare(as.actual, as.op, as.value);
      if (!as.pass) res.pass = false;
      pr.assertions.push_back(as);
    }
    res.pipelines.push_back(std::move(pr));
  }
  return res;
}

/// Writes summary.json, timing.json, config.json and one CSV per table into dir.
inline void write_report(const RunResult& res, const json& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "summary.json") << res.summary().dump(2) << "\n";
  std::ofstream(dir / "config.json") << config.dump(2) << "\n";
  json timing;
  for (const auto& p : res.pipelines) timing[p.id] = p.seconds;
  std::ofstream(dir / "timing.json") << timing.dump(2) << "\n";
  for (const auto& p : res.pipelines)
    for (const auto& t : p.tables) std::ofstream(dir / (p.id + "." + t.kind() + ".csv")) << t.str();
}

inline json load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot read config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace bergman
