#pragma once

/**
 * @file carleman.hpp
 * @brief Plane regions on Cartesian grids, Dirichlet Green solves, the Carleman weight and
 * inequality, h-optimization, three-sphere bounds and doubling indices.
 */

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <deque>
#include <fstream>
#include <memory>

#include "bergman/kernels.hpp"

namespace bergman {

// ---------------------------------------------------------------------------
// Shapes

/// Closed-form planar set with a bounding box {xmin, xmax, ymin, ymax}.
struct Shape {
  std::function<bool(double, double)> inside;
  std::array<double, 4> box{};
  std::string name;
  bool operator()(double x, double y) const { return inside(x, y); }
};

inline Shape shape_disc(double cx, double cy, double r) {
  return {[=](double x, double y) { return (x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r; }, {cx - r, cx + r, cy - r, cy + r}, "disc"};
}

inline Shape shape_ellipse(double cx, double cy, double a, double b) {
  return {[=](double x, double y) { return (x - cx) * (x - cx) / (a * a) + (y - cy) * (y - cy) / (b * b) < 1; },
          {cx - a, cx + a, cy - b, cy + b},
          "ellipse"};
}

inline Shape shape_rect(double x0, double x1, double y0, double y1) {
  return {[=](double x, double y) { return x > x0 && x < x1 && y > y0 && y < y1; }, {x0, x1, y0, y1}, "rect"};
}

/// Simple polygon (even-odd rule).
inline Shape shape_polygon(std::vector<std::array<double, 2>> v) {
  std::array<double, 4> box{1e300, -1e300, 1e300, -1e300};
  for (const auto& p : v) {
    box[0] = std::min(box[0], p[0]);
    box[1] = std::max(box[1], p[0]);
    box[2] = std::min(box[2], p[1]);
    box[3] = std::max(box[3], p[1]);
  }
  return {[v](double x, double y) {
            bool in = false;
            for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
              if ((v[i][1] > y) != (v[j][1] > y) && x < (v[j][0] - v[i][0]) * (y - v[i][1]) / (v[j][1] - v[i][1]) + v[i][0]) in = !in;
            }
            return in;
          },
          box, "polygon"};
}

/// {r0 < |p - c| < r1, angle in [t0, t1)} with angles in [0, 2 pi).
inline Shape shape_sector(double cx, double cy, double r0, double r1, double t0, double t1) {
  return {[=](double x, double y) {
            double dx = x - cx, dy = y - cy, rr = std::hypot(dx, dy);
            if (!(rr > r0 && rr < r1)) return false;
            double a = std::atan2(dy, dx);
            if (a < 0) a += 2 * pi;
            return a >= t0 && a < t1;
          },
          {cx - r1, cx + r1, cy - r1, cy + r1},
          "sector"};
}

inline Shape shape_halfplane(double nx, double ny, double c, std::array<double, 4> box) {
  return {[=](double x, double y) { return nx * x + ny * y > c; }, box, "halfplane"};
}

inline Shape shape_intersect(const Shape& a, const Shape& b) {
  return {[a, b](double x, double y) { return a(x, y) && b(x, y); },
          {std::max(a.box[0], b.box[0]), std::min(a.box[1], b.box[1]), std::max(a.box[2], b.box[2]), std::min(a.box[3], b.box[3])},
          a.name + "&" + b.name};
}

inline Shape shape_union(const Shape& a, const Shape& b) {
  return {[a, b](double x, double y) { return a(x, y) || b(x, y); },
          {std::min(a.box[0], b.box[0]), std::max(a.box[1], b.box[1]), std::min(a.box[2], b.box[2]), std::max(a.box[3], b.box[3])},
          a.name + "|" + b.name};
}

inline Shape shape_subtract(const Shape& a, const Shape& b) {
  return {[a, b](double x, double y) { return a(x, y) && !b(x, y); }, a.box, a.name + "-" + b.name};
}

/// Image of a shape under p -> (p - shift) * scale.
inline Shape shape_affine(const Shape& a, double sx, double sy, double scale) {
  return {[a, sx, sy, scale](double x, double y) { return a(x / scale + sx, y / scale + sy); },
          {(a.box[0] - sx) * scale, (a.box[1] - sx) * scale, (a.box[2] - sy) * scale, (a.box[3] - sy) * scale},
          a.name};
}

/// Boundary points of a star-shaped set on `rays` rays from the center of its box (bisection).
inline std::vector<std::array<double, 2>> star_boundary(const Shape& s, int rays = 2048) {
  double cx = 0.5 * (s.box[0] + s.box[1]), cy = 0.5 * (s.box[2] + s.box[3]);
  double R = std::hypot(s.box[1] - s.box[0], s.box[3] - s.box[2]);
  std::vector<std::array<double, 2>> out;
  for (int k = 0; k < rays; ++k) {
    double a = 2 * pi * k / rays, c = std::cos(a), sn = std::sin(a);
    double lo = 0, hi = R;
    if (!s(cx, cy)) throw BergmanError("star_boundary: box center not inside the shape");
    for (int it = 0; it < 60; ++it) {
      double m = 0.5 * (lo + hi);
      (s(cx + m * c, cy + m * sn) ? lo : hi) = m;
    }
    out.push_back({cx + lo * c, cy + lo * sn});
  }
  return out;
}

inline double point_set_diameter(const std::vector<std::array<double, 2>>& p) {
  double d = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) d = std::max(d, std::hypot(p[i][0] - p[j][0], p[i][1] - p[j][1]));
  return d;
}

// ---------------------------------------------------------------------------
// Distance transform

namespace detail {
/// 1-D squared distance transform (lower envelope of parabolas).
inline void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  const double inf = 1e300;
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  for (int q = 1; q < n; ++q) {
    double s;
    for (;;) {
      s = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
      if (s <= z[k] && k > 0)
        --k;
      else
        break;
    }
    if (s <= z[k]) {  // k == 0 and the first parabola is dominated
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = double(q - v[k]) * (q - v[k]) + f[v[k]];
  }
}
}  // namespace detail

/// Euclidean distance (in grid units times h) from every node to the nearest feature node.
inline std::vector<double> distance_transform(const std::vector<char>& feature, int nx, int ny, double h) {
  const double big = 1e20;
  std::vector<double> g(static_cast<std::size_t>(nx) * ny);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = feature[i] ? 0.0 : big;
  int n = std::max(nx, ny);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  // columns (fixed i, varying j)
  for (int i = 0; i < nx; ++i) {
    f.resize(ny);
    d.resize(ny);
    for (int j = 0; j < ny; ++j) f[j] = g[static_cast<std::size_t>(i) * ny + j];
    detail::edt_1d(f, d, v, z);
    for (int j = 0; j < ny; ++j) g[static_cast<std::size_t>(i) * ny + j] = d[j];
  }
  for (int j = 0; j < ny; ++j) {
    f.resize(nx);
    d.resize(nx);
    for (int i = 0; i < nx; ++i) f[i] = g[static_cast<std::size_t>(i) * ny + j];
    detail::edt_1d(f, d, v, z);
    for (int i = 0; i < nx; ++i) g[static_cast<std::size_t>(i) * ny + j] = d[i];
  }
  for (auto& x : g) x = std::sqrt(x) * h;
  return g;
}

// ---------------------------------------------------------------------------
// Plane regions

/// X, Y, Z as masks on a uniform grid (node (i, j) at (x0 + i h, y0 + j h)), after the normalizing map.
struct PlaneRegion {
  int nx = 0, ny = 0;
  double x0 = 0, y0 = 0, hg = 0;
  std::vector<char> X, Y, Z;
  double d = 0;
  double map_scale = 1;                ///< D(p) = (p - map_shift) * map_scale
  std::array<double, 2> map_shift{};
  std::vector<double> dist_Z;          ///< distance of each node to the complement of Z
  // audits
  double diam_Y = 0, area_Y = 0, area_X = 0, separation = 0, exterior_sphere_pass = 1;
  bool y_in_z = true;

  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * ny + j; }
  std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
  double x(int i) const { return x0 + i * hg; }
  double y(int j) const { return y0 + j * hg; }
  cplx z(std::size_t k) const { return {x(static_cast<int>(k / ny)), y(static_cast<int>(k % ny))}; }
  double cell() const { return hg * hg; }

  std::vector<char> rasterize(const Shape& s) const {
    std::vector<char> m(size());
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) m[idx(i, j)] = s(x(i), y(j)) ? 1 : 0;
    return m;
  }
  /// Nodes of `m` with a 4-neighbor outside `m` (or on the grid edge).
  std::vector<char> boundary_of(const std::vector<char>& m) const {
    std::vector<char> b(size());
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) {
        if (!m[idx(i, j)]) continue;
        bool edge = i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
        b[idx(i, j)] = edge || !m[idx(i - 1, j)] || !m[idx(i + 1, j)] || !m[idx(i, j - 1)] || !m[idx(i, j + 1)];
      }
    return b;
  }
  double measure(const std::vector<char>& m) const {
    std::size_t c = 0;
    for (char v : m) c += v ? 1 : 0;
    return static_cast<double>(c) * cell();
  }
  void update_distance() {
    std::vector<char> out(size());
    for (std::size_t k = 0; k < size(); ++k) out[k] = Z[k] ? 0 : 1;
    dist_Z = distance_transform(out, nx, ny, hg);
  }
};

namespace detail {
inline void grid_for(PlaneRegion& R, const std::array<double, 4>& box, int n) {
  double w = box[1] - box[0], h = box[3] - box[2];
  R.hg = std::max(w, h) / n;
  R.x0 = box[0] - 3 * R.hg;
  R.y0 = box[2] - 3 * R.hg;
  R.nx = static_cast<int>(std::ceil(w / R.hg)) + 7;
  R.ny = static_cast<int>(std::ceil(h / R.hg)) + 7;
}
}  // namespace detail

/// Region whose Z is a given shape (X = Z); Y optional.
inline PlaneRegion plane_region(const Shape& Zs, int n = 512, std::optional<Shape> Ys = std::nullopt) {
  PlaneRegion R;
  detail::grid_for(R, Zs.box, n);
  R.X = R.rasterize(Zs);
  R.Z = R.X;
  R.Y = Ys ? R.rasterize(*Ys) : std::vector<char>(R.size(), 0);
  R.area_X = R.measure(R.X);
  R.area_Y = R.measure(R.Y);
  R.update_distance();
  return R;
}

/**
 * @brief Normalize so that diam(Y) = 1/4, then Z = X minus the union of balls of radius d/2
 * centered on the grid boundary of X. Audits: separation dist(dX, Y), Y inside Z, the
 * d/4 exterior-sphere condition at sampled boundary points of Z.
 */
inline PlaneRegion build_Z(const Shape& Xs, const Shape& Ys, double d, int n = 512, std::uint64_t seed = 1) {
  if (!(d > 0 && d < 0.25)) throw BergmanError("build_Z: need 0 < d < 1/4");
  PlaneRegion R;
  R.d = d;
  double diam0 = point_set_diameter(star_boundary(Ys));
  R.map_scale = 0.25 / diam0;
  R.map_shift = {0.5 * (Ys.box[0] + Ys.box[1]), 0.5 * (Ys.box[2] + Ys.box[3])};
  Shape X = shape_affine(Xs, R.map_shift[0], R.map_shift[1], R.map_scale);
  Shape Y = shape_affine(Ys, R.map_shift[0], R.map_shift[1], R.map_scale);
  R.diam_Y = point_set_diameter(star_boundary(Y));
  detail::grid_for(R, X.box, n);
  if (R.hg > d / 4) throw BergmanError("build_Z: grid too coarse to resolve the boundary of X at scale d/4");
  R.X = R.rasterize(X);
  R.Y = R.rasterize(Y);
  auto bX = R.boundary_of(R.X);
  auto distX = distance_transform(bX, R.nx, R.ny, R.hg);
  R.Z.assign(R.size(), 0);
  for (std::size_t k = 0; k < R.size(); ++k) R.Z[k] = R.X[k] && distX[k] >= d / 2;
  R.area_X = R.measure(R.X);
  R.area_Y = R.measure(R.Y);
  R.separation = 1e300;
  for (std::size_t k = 0; k < R.size(); ++k) {
    if (!R.Y[k]) continue;
    R.separation = std::min(R.separation, distX[k]);
    if (!R.Z[k]) R.y_in_z = false;
  }
  R.update_distance();
  // exterior-sphere audit at sampled boundary nodes of Z
  auto bZ = R.boundary_of(R.Z);
  std::vector<std::size_t> bz, bx;
  for (std::size_t k = 0; k < R.size(); ++k) {
    if (bZ[k]) bz.push_back(k);
    if (bX[k]) bx.push_back(k);
  }
  Rng rng(derive_seed(seed, "exterior-sphere"));
  std::shuffle(bz.begin(), bz.end(), rng);
  if (bz.size() > 200) bz.resize(200);
  int pass = 0;
  for (std::size_t q : bz) {
    cplx zq = R.z(q), best = 0;
    double bd = 1e300;
    for (std::size_t p : bx) {
      double dd = std::abs(R.z(p) - zq);
      if (dd < bd) {
        bd = dd;
        best = R.z(p);
      }
    }
    cplx c = zq + (d / 4) * (best - zq) / std::abs(best - zq);
    double rr = d / 4 - 1.5 * R.hg;
    int ci = static_cast<int>(std::round((c.real() - R.x0) / R.hg)), cj = static_cast<int>(std::round((c.imag() - R.y0) / R.hg));
    int w = static_cast<int>(std::ceil(d / 4 / R.hg)) + 1;
    bool ok = true;
    for (int i = std::max(0, ci - w); i <= std::min(R.nx - 1, ci + w) && ok; ++i)
      for (int j = std::max(0, cj - w); j <= std::min(R.ny - 1, cj + w); ++j)
        if (R.Z[R.idx(i, j)] && std::abs(cplx(R.x(i), R.y(j)) - c) < rr) {
          ok = false;
          break;
        }
    pass += ok ? 1 : 0;
  }
  R.exterior_sphere_pass = bz.empty() ? 1.0 : static_cast<double>(pass) / static_cast<double>(bz.size());
  return R;
}

// ---------------------------------------------------------------------------
// Green solves

struct GreenSolution {
  std::vector<double> phi;  ///< on the full grid, zero off Z
  double residual = 0;      ///< max |A phi - b| / max |b|
  double min_value = 0;
  int source_free_components = 0;
};

/// Factorized 5-point Dirichlet Laplacian on Z; immutable after construction and shareable.
class GreenSolver {
 public:
  explicit GreenSolver(const PlaneRegion& R) : R_(R), map_(R.size(), -1) {
    int n = 0;
    for (std::size_t k = 0; k < R.size(); ++k)
      if (R.Z[k]) map_[k] = n++;
    if (n == 0) throw BergmanError("GreenSolver: empty region");
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(5 * static_cast<std::size_t>(n));
    for (int i = 0; i < R.nx; ++i)
      for (int j = 0; j < R.ny; ++j) {
        int a = map_[R.idx(i, j)];
        if (a < 0) continue;
        t.emplace_back(a, a, 4.0);
        const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
        for (int e = 0; e < 4; ++e) {
          int ii = i + di[e], jj = j + dj[e];
          if (ii < 0 || jj < 0 || ii >= R.nx || jj >= R.ny) continue;
          int b = map_[R.idx(ii, jj)];
          if (b >= 0) t.emplace_back(a, b, -1.0);
        }
      }
    A_.resize(n, n);
    A_.setFromTriplets(t.begin(), t.end());
    solver_ = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    solver_->compute(A_);
    if (solver_->info() != Eigen::Success) throw BergmanError("GreenSolver: factorization failed");
    label_components();
  }

  const PlaneRegion& region() const { return R_; }

  /// Solve -Delta phi = source on Z, phi = 0 off Z.
  GreenSolution solve(const std::vector<double>& source) const {
    const int n = static_cast<int>(A_.rows());
    Eigen::VectorXd b(n);
    for (std::size_t k = 0; k < R_.size(); ++k)
      if (map_[k] >= 0) b[map_[k]] = source[k] * R_.cell();
    Eigen::VectorXd u = solver_->solve(b);
    GreenSolution g;
    g.phi.assign(R_.size(), 0.0);
    for (std::size_t k = 0; k < R_.size(); ++k)
      if (map_[k] >= 0) g.phi[k] = u[map_[k]];
    double bn = b.lpNorm<Eigen::Infinity>();
    g.residual = bn > 0 ? (A_ * u - b).lpNorm<Eigen::Infinity>() / bn : (A_ * u - b).lpNorm<Eigen::Infinity>();
    g.min_value = n ? u.minCoeff() : 0;
    std::vector<char> has(ncomp_, 0);
    for (std::size_t k = 0; k < R_.size(); ++k)
      if (map_[k] >= 0 && source[k] != 0) has[comp_[map_[k]]] = 1;
    for (char h : has) g.source_free_components += h ? 0 : 1;
    return g;
  }

  /// Discrete Green function with pole at node k: G(., y_k).
  GreenSolution point_source(std::size_t k) const {
    std::vector<double> s(R_.size(), 0.0);
    s[k] = 1.0 / R_.cell();
    return solve(s);
  }

  int components() const { return ncomp_; }

 private:
  void label_components() {
    const int n = static_cast<int>(A_.rows());
    comp_.assign(n, -1);
    std::vector<std::size_t> node_of(n);
    for (std::size_t k = 0; k < R_.size(); ++k)
      if (map_[k] >= 0) node_of[map_[k]] = k;
    for (int s = 0; s < n; ++s) {
      if (comp_[s] >= 0) continue;
      std::deque<int> q{s};
      comp_[s] = ncomp_;
      while (!q.empty()) {
        int a = q.front();
        q.pop_front();
        for (Eigen::SparseMatrix<double>::InnerIterator it(A_, a); it; ++it)
          if (comp_[it.row()] < 0) {
            comp_[it.row()] = ncomp_;
            q.push_back(static_cast<int>(it.row()));
          }
      }
      ++ncomp_;
    }
  }

  const PlaneRegion& R_;
  std::vector<int> map_;
  Eigen::SparseMatrix<double> A_;
  std::shared_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> solver_;
  std::vector<int> comp_;
  int ncomp_ = 0;
};

inline GreenSolution green_solve(const GreenSolver& s, const std::vector<double>& source) { return s.solve(source); }

/// Write a grid as a small text header followed by raw little-endian doubles.
inline void write_grid(const std::string& path, const PlaneRegion& R, const std::vector<double>& v) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw BergmanError("write_grid: cannot open " + path);
  os << "bergman-grid 1\nnx " << R.nx << "\nny " << R.ny << "\nx0 " << R.x0 << "\ny0 " << R.y0 << "\nh " << R.hg << "\norder row-major-x\nend\n";
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

// ---------------------------------------------------------------------------
// Green regularity probe

struct GreenProbeRow {
  int direction = 0;
  double dist = 0, sup = 0;
};

struct GreenProbe {
  double eta = 0;
  double inf_pairs = 0;
  std::vector<GreenProbeRow> rows;  ///< per direction, ordered by decreasing distance
  bool monotone = true;
};

/**
 * @brief inf of G_Z over pairs in Z'_eta (from `pairs` seeded poles) and, along `directions` rays from
 * the interior toward the boundary, sup_{y in Z'_eta} G_Z(x, y) for dist(x, dZ) = eta 2^-k.
 */
inline GreenProbe green_regularity_probe(const GreenSolver& S, double eta, int pairs = 8, int directions = 4, std::uint64_t seed = 1) {
  const PlaneRegion& R = S.region();
  if (!(eta > 4 * R.hg)) throw BergmanError("green_regularity_probe: eta below grid resolution");
  std::vector<std::size_t> inner;
  for (std::size_t k = 0; k < R.size(); ++k)
    if (R.Z[k] && R.dist_Z[k] > eta) inner.push_back(k);
  if (inner.empty()) throw BergmanError("green_regularity_probe: Z'_eta is empty");
  GreenProbe P;
  P.eta = eta;
  Rng rng(derive_seed(seed, "green-probe"));
  std::vector<std::size_t> poles;
  for (int k = 0; k < pairs; ++k) poles.push_back(inner[std::uniform_int_distribution<std::size_t>(0, inner.size() - 1)(rng)]);
  auto infs = parallel_map<double>(poles.size(), [&](std::size_t a) {
    auto g = S.point_source(poles[a]);
    double m = 1e300;
    for (std::size_t k : inner) m = std::min(m, g.phi[k]);
    return m;
  });
  P.inf_pairs = *std::min_element(infs.begin(), infs.end());
  // start from the deepest node
  std::size_t c = inner[0];
  for (std::size_t k : inner)
    if (R.dist_Z[k] > R.dist_Z[c]) c = k;
  cplx zc = R.z(c);
  std::vector<std::pair<int, std::size_t>> xs;
  for (int dir = 0; dir < directions; ++dir) {
    double a = 2 * pi * (dir + 0.25) / directions;
    cplx e = std::polar(1.0, a);
    std::vector<std::size_t> path;
    for (double t = 0;; t += 0.5 * R.hg) {
      cplx p = zc + t * e;
      int i = static_cast<int>(std::round((p.real() - R.x0) / R.hg)), j = static_cast<int>(std::round((p.imag() - R.y0) / R.hg));
      if (i < 0 || j < 0 || i >= R.nx || j >= R.ny || !R.Z[R.idx(i, j)]) break;
      path.push_back(R.idx(i, j));
    }
    for (double t = eta / 2; t >= R.hg; t /= 2) {
      std::size_t best = path.back();
      for (std::size_t k : path)
        if (std::abs(R.dist_Z[k] - t) < std::abs(R.dist_Z[best] - t)) best = k;
      xs.push_back({dir, best});
    }
  }
  auto sups = parallel_map<double>(xs.size(), [&](std::size_t a) {
    auto g = S.point_source(xs[a].second);
    double m = 0;
    for (std::size_t k : inner) m = std::max(m, g.phi[k]);
    return m;
  });
  for (std::size_t a = 0; a < xs.size(); ++a) P.rows.push_back({xs[a].first, R.dist_Z[xs[a].second], sups[a]});
  for (std::size_t a = 1; a < P.rows.size(); ++a)
    if (P.rows[a].direction == P.rows[a - 1].direction && P.rows[a].dist < P.rows[a - 1].dist && P.rows[a].sup > P.rows[a - 1].sup) P.monotone = false;
  return P;
}

// ---------------------------------------------------------------------------
// Carleman weight

struct CarlemanWeight {
  std::vector<double> phi1, phi2, phi, psi;
  double gamma = 1;        ///< <E>_Y = |E| / |Y|
  double c1 = 0;           ///< inf_Y phi1
  double C = 0;            ///< max(sup_Y phi1 / (1 + log 1/gamma), sup_Y phi2)
  double rho = 0;          ///< c1 / (2 C)
  double S = 0, delta = 0, nu = 0, theta = 0;
  double s = 0;            ///< collar width: phi <= c1/4 on Z_s
  double M = 0;            ///< sup |dbar psi|^2
  double S_star = 0;       ///< 1 + log(1/gamma)
  // audits
  double inf_Y_phi = 0, max_collar_phi = 0;
  double residual = 0;
};

/// 1 for dist >= s, 0 for dist <= s/2, smootherstep in between.
inline std::vector<double> collar_cutoff(const PlaneRegion& R, double s) {
  std::vector<double> psi(R.size(), 0.0);
  for (std::size_t k = 0; k < R.size(); ++k)
    if (R.Z[k]) psi[k] = smootherstep(std::clamp((R.dist_Z[k] - s / 2) / (s / 2), 0.0, 1.0));
  return psi;
}

namespace detail {
/// Central-difference dbar of a grid function at an interior node.
inline cplx dbar(const PlaneRegion& R, const std::vector<cplx>& g, int i, int j) {
  cplx gx = (g[R.idx(i + 1, j)] - g[R.idx(i - 1, j)]) / (2 * R.hg);
  cplx gy = (g[R.idx(i, j + 1)] - g[R.idx(i, j - 1)]) / (2 * R.hg);
  return 0.5 * (gx + cplx(0, 1) * gy);
}
inline double laplacian(const PlaneRegion& R, const std::vector<double>& f, int i, int j) {
  return (f[R.idx(i + 1, j)] + f[R.idx(i - 1, j)] + f[R.idx(i, j + 1)] + f[R.idx(i, j - 1)] - 4 * f[R.idx(i, j)]) / R.cell();
}
inline bool interior(const PlaneRegion& R, int i, int j) {
  return i > 0 && j > 0 && i < R.nx - 1 && j < R.ny - 1 && R.Z[R.idx(i, j)] && R.Z[R.idx(i + 1, j)] && R.Z[R.idx(i - 1, j)] &&
         R.Z[R.idx(i, j + 1)] && R.Z[R.idx(i, j - 1)];
}
}  // namespace detail

/**
 * @brief phi = phi1 - rho phi2 with -Delta phi1 = chi_E / <E>_Y, -Delta phi2 = chi_Y (Dirichlet on Z),
 * rho = c1 / 2C, the constants S, delta, nu, theta, the collar width s (largest with phi <= c1/4 on
 * Z_s, found by search) and the cutoff psi.
 */
inline CarlemanWeight carleman_weight(const GreenSolver& S, const std::vector<char>& E) {
  const PlaneRegion& R = S.region();
  CarlemanWeight w;
  double nE = 0, nY = 0;
  for (std::size_t k = 0; k < R.size(); ++k) {
    if (E[k] && !R.Y[k]) throw BergmanError("carleman_weight: E must lie in Y");
    nE += E[k] ? 1 : 0;
    nY += R.Y[k] ? 1 : 0;
  }
  if (nE == 0) throw BergmanError("carleman_weight: |E| = 0");
  w.gamma = nE / nY;
  w.S_star = 1 + std::log(1 / w.gamma);
  std::vector<double> s1(R.size()), s2(R.size());
  for (std::size_t k = 0; k < R.size(); ++k) {
    s1[k] = E[k] ? 1.0 / w.gamma : 0.0;
    s2[k] = R.Y[k] ? 1.0 : 0.0;
  }
  auto g1 = S.solve(s1), g2 = S.solve(s2);
  w.residual = std::max(g1.residual, g2.residual);
  w.phi1 = std::move(g1.phi);
  w.phi2 = std::move(g2.phi);
  double sup1 = 0, sup2 = 0;
  w.c1 = 1e300;
  for (std::size_t k = 0; k < R.size(); ++k)
    if (R.Y[k]) {
      w.c1 = std::min(w.c1, w.phi1[k]);
      sup1 = std::max(sup1, w.phi1[k]);
      sup2 = std::max(sup2, w.phi2[k]);
    }
  if (!(w.c1 > 0)) throw BergmanError("carleman_weight: inf_Y phi1 <= 0 (Y touches the boundary of Z)");
  w.C = std::max(sup1 / w.S_star, sup2);
  w.rho = w.c1 / (2 * w.C);
  w.phi.resize(R.size());
  for (std::size_t k = 0; k < R.size(); ++k) w.phi[k] = w.phi1[k] - w.rho * w.phi2[k];
  w.S = -1e300;
  w.inf_Y_phi = 1e300;
  for (std::size_t k = 0; k < R.size(); ++k)
    if (R.Y[k]) {
      w.S = std::max(w.S, w.phi[k]);
      w.inf_Y_phi = std::min(w.inf_Y_phi, w.phi[k]);
    }
  w.delta = w.c1 / 2;
  w.nu = 2 * (w.S - w.delta);
  w.theta = w.delta / (w.nu + w.delta);
  // collar: nodes of Z with dist <= s must satisfy phi <= c1/4
  double first_bad = 1e300;
  for (std::size_t k = 0; k < R.size(); ++k)
    if (R.Z[k] && w.phi[k] > w.c1 / 4) first_bad = std::min(first_bad, R.dist_Z[k]);
  w.s = first_bad - 0.5 * R.hg;
  if (!(w.s > 4 * R.hg)) throw BergmanError("carleman_weight: collar width below grid resolution");
  w.max_collar_phi = -1e300;
  for (std::size_t k = 0; k < R.size(); ++k)
    if (R.Z[k] && R.dist_Z[k] <= w.s) w.max_collar_phi = std::max(w.max_collar_phi, w.phi[k]);
  w.psi = collar_cutoff(R, w.s);
  std::vector<cplx> pc(w.psi.begin(), w.psi.end());
  for (int i = 1; i < R.nx - 1; ++i)
    for (int j = 1; j < R.ny - 1; ++j)
      if (R.Z[R.idx(i, j)]) w.M = std::max(w.M, std::norm(detail::dbar(R, pc, i, j)));
  return w;
}

// ---------------------------------------------------------------------------
// Carleman inequality

struct CarlemanCheck {
  double h = 0;
  double lhs = 0, rhs = 0, slack = 0;  ///< all scaled by exp(-log_shift)
  double log_shift = 0;                ///< max of 2 phi / h over the support
  double rel_slack() const { return rhs != 0 ? slack / std::abs(rhs) : slack; }
};

/**
 * @brief lhs = 4h^2 int e^{2phi/h} |dbar g|^2, rhs = h int e^{2phi/h} |g|^2 Delta phi on the grid
 * (central differences, 5-point Laplacian), with the exponent shifted by its maximum.
 */
inline CarlemanCheck carleman_check(const PlaneRegion& R, const std::vector<double>& phi, double h, const std::vector<cplx>& g) {
  if (!(h > 0)) throw BergmanError("carleman_check: h must be positive");
  for (std::size_t k = 0; k < R.size(); ++k)
    if (g[k] != 0.0 && R.dist_Z[k] < 4 * R.hg) throw BergmanError("carleman_check: test function must vanish within 4 cells of the boundary of Z");
  CarlemanCheck c;
  c.h = h;
  c.log_shift = -1e300;
  for (std::size_t k = 0; k < R.size(); ++k)
    if (R.Z[k]) c.log_shift = std::max(c.log_shift, 2 * phi[k] / h);
  for (int i = 1; i < R.nx - 1; ++i)
    for (int j = 1; j < R.ny - 1; ++j) {
      if (!detail::interior(R, i, j)) continue;
      std::size_t k = R.idx(i, j);
      double e = std::exp(2 * phi[k] / h - c.log_shift);
      c.lhs += 4 * h * h * e * std::norm(detail::dbar(R, g, i, j));
      if (g[k] != 0.0) c.rhs += h * e * std::norm(g[k]) * detail::laplacian(R, phi, i, j);
    }
  c.lhs *= R.cell();
  c.rhs *= R.cell();
  c.slack = c.lhs - c.rhs;
  return c;
}

/// Grid sample of g = psi f.
inline std::vector<cplx> cutoff_times(const PlaneRegion& R, const std::vector<double>& psi, const std::function<cplx(cplx)>& f) {
  std::vector<cplx> g(R.size(), 0.0);
  for (std::size_t k = 0; k < R.size(); ++k)
    if (psi[k] != 0) g[k] = psi[k] * f(R.z(k));
  return g;
}

/**
 * @brief Two-variable check on a product grid Z x Z: g(z1, z2) = psi(z1) psi(z2) f(z1, z2),
 * phi(z1, z2) = phiA(z1) + phiB(z2). Returns per-variable checks and their sum.
 */
struct ProductCheck {
  std::array<CarlemanCheck, 2> part;
  CarlemanCheck sum;
};

inline ProductCheck carleman_check_product(const PlaneRegion& R, const std::vector<double>& phiA, const std::vector<double>& phiB,
                                           const std::vector<double>& psi, double h, const std::function<cplx(cplx, cplx)>& f) {
  std::vector<std::size_t> nodes;
  for (int i = 1; i < R.nx - 1; ++i)
    for (int j = 1; j < R.ny - 1; ++j)
      if (detail::interior(R, i, j)) nodes.push_back(R.idx(i, j));
  double shift = -1e300;
  for (std::size_t a : nodes)
    for (std::size_t b : nodes) shift = std::max(shift, 2 * (phiA[a] + phiB[b]) / h);
  auto dbar_at = [&](const std::vector<cplx>& line, std::size_t k) {
    int i = static_cast<int>(k / R.ny), j = static_cast<int>(k % R.ny);
    return detail::dbar(R, line, i, j);
  };
  auto lap_at = [&](const std::vector<double>& p, std::size_t k) {
    int i = static_cast<int>(k / R.ny), j = static_cast<int>(k % R.ny);
    return detail::laplacian(R, p, i, j);
  };
  // per-thread partial sums over the first variable
  std::vector<std::array<double, 4>> part(nodes.size());
  parallel_for(nodes.size(), [&](std::size_t ia) {
    std::size_t a = nodes[ia];
    std::array<double, 4> acc{};
    std::vector<cplx> line1(R.size(), 0.0), line2(R.size(), 0.0);
    // line in the second variable at fixed z1 = a
    for (std::size_t k = 0; k < R.size(); ++k)
      if (psi[k] != 0 && psi[a] != 0) line2[k] = psi[a] * psi[k] * f(R.z(a), R.z(k));
    for (std::size_t b : nodes) {
      // line in the first variable at fixed z2 = b (only the 5-point stencil around a is needed)
      int i = static_cast<int>(a / R.ny), j = static_cast<int>(a % R.ny);
      const std::size_t st[5] = {a, R.idx(i + 1, j), R.idx(i - 1, j), R.idx(i, j + 1), R.idx(i, j - 1)};
      for (std::size_t s : st) line1[s] = psi[s] * psi[b] * f(R.z(s), R.z(b));
      double e = std::exp(2 * (phiA[a] + phiB[b]) / h - shift);
      cplx g = line2[b];
      acc[0] += 4 * h * h * e * std::norm(dbar_at(line1, a));
      acc[1] += h * e * std::norm(g) * lap_at(phiA, a);
      acc[2] += 4 * h * h * e * std::norm(dbar_at(line2, b));
      acc[3] += h * e * std::norm(g) * lap_at(phiB, b);
    }
    part[ia] = acc;
  });
  ProductCheck P;
  std::array<double, 4> tot{};
  for (const auto& p : part)
    for (int q = 0; q < 4; ++q) tot[q] += p[q];
  double vol = R.cell() * R.cell();
  for (int q = 0; q < 2; ++q) {
    P.part[q].h = h;
    P.part[q].log_shift = shift;
    P.part[q].lhs = tot[2 * q] * vol;
    P.part[q].rhs = tot[2 * q + 1] * vol;
    P.part[q].slack = P.part[q].lhs - P.part[q].rhs;
  }
  P.sum.h = h;
  P.sum.log_shift = shift;
  P.sum.lhs = P.part[0].lhs + P.part[1].lhs;
  P.sum.rhs = P.part[0].rhs + P.part[1].rhs;
  P.sum.slack = P.sum.lhs - P.sum.rhs;
  return P;
}

// ---------------------------------------------------------------------------
// h optimization

struct HOptimum {
  double h0 = 0;
  double theta = 0;
  double log_G_residual = 0;  ///< log G(h0) - log(A/B)
  bool large_h = false;       ///< branch h0 >= 1
  double bound = 0;           ///< bound on int_Y |f|^2
  double identity = 0;        ///< nu theta - delta + delta theta
};

/**
 * @brief Solve G(h0) = A/B with G(h) = (C h)^-1 exp((nu + delta)/h) by bisection in log h and
 * evaluate the product-form bound: C^-theta e^delta B^theta A^{1-theta} if h0 >= 1, otherwise
 * (2/rho) C^{1-theta} B^theta A^{1-theta}.
 */
inline HOptimum optimize_h(double A, double B, double Cc, double nu, double delta, double rho = 1.0) {
  if (!(B > 0)) throw BergmanError("optimize_h: B = 0 gives an infinite bound");
  if (!(A > 0 && Cc > 0 && nu > 0 && delta > 0)) throw BergmanError("optimize_h: need A, C, nu, delta > 0");
  HOptimum o;
  o.theta = delta / (nu + delta);
  o.identity = nu * o.theta - delta + delta * o.theta;
  const double target = std::log(A / B);
  auto logG = [&](double lh) { return -std::log(Cc) - lh + (nu + delta) * std::exp(-lh); };
  double lo = -50, hi = 50;  // logG decreasing in log h
  while (logG(lo) < target) lo -= 50;
  while (logG(hi) > target) hi += 50;
  for (int it = 0; it < 400 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
    double m = 0.5 * (lo + hi);
    (logG(m) > target ? lo : hi) = m;
  }
  double lh = 0.5 * (lo + hi);
  o.h0 = std::exp(lh);
  o.log_G_residual = logG(lh) - target;
  o.large_h = o.h0 >= 1;
  double t = o.theta;
  double logb = t * std::log(B) + (1 - t) * std::log(A);
  o.bound = o.large_h ? std::exp(-t * std::log(Cc) + delta + logb) : std::exp(std::log(2 / rho) + (1 - t) * std::log(Cc) + logb);
  return o;
}

// ---------------------------------------------------------------------------
// Three-sphere estimate

struct ThreeSphereRecord {
  std::string id;
  double avg_Y = 0, avg_E = 0, N = 0;
  double bound_chain = 0;  ///< from the h-optimized Carleman chain
  double bound_fitted = 0; ///< C e^{C (N+1) S*}
  double ratio = 0;        ///< avg_Y / avg_E
  bool violation = false;
};

struct ThreeSphereReport {
  double gamma = 0, S_star = 0, C_fit = 0, log_K = 0, theta = 0;
  std::vector<ThreeSphereRecord> records;
  int violations = 0;
};

/**
 * @brief Smallest C with C >= b / S* and log C + C S* >= a, so that exp(a + b N) <= C e^{C(N+1)S*}
 * for all N >= 0.
 */
inline double fit_three_sphere_constant(double a, double b, double S_star) {
  double lo = std::max(b / S_star, 1e-300), hi = std::max(lo, 1.0);
  auto ok = [&](double C) { return std::log(C) + C * S_star >= a; };
  if (ok(lo)) return lo;
  while (!ok(hi)) hi *= 2;
  for (int it = 0; it < 200; ++it) {
    double m = 0.5 * (lo + hi);
    (ok(m) ? hi : lo) = m;
  }
  return hi;
}

/// log K with int_Y |f|^2 <= K B^theta A^{1-theta} on both branches of the h-optimization.
inline double chain_log_constant(const CarlemanWeight& w) {
  double Cc = 4 * w.M, t = w.theta;
  return std::max(-t * std::log(Cc) + w.delta, std::log(2 / w.rho) + (1 - t) * std::log(Cc));
}

/**
 * @brief Per-function record <f>_{2,Y}, <f>_{2,E}, N = log(||f||_X / ||f||_Y) and the bounds.
 * With A = e^{2N} int_Y |f|^2 and B = gamma^-1 int_E |f|^2 the chain gives
 * <f>_{2,Y} <= K^{1/(2 theta)} e^{N (1-theta)/theta} <f>_{2,E}. The fitted constant C is computed
 * from the weight alone (no function data) via fit_three_sphere_constant.
 */
inline ThreeSphereReport three_sphere_estimate(const PlaneRegion& R, const CarlemanWeight& w, const std::vector<char>& E,
                                               const std::vector<std::pair<std::string, std::function<cplx(cplx)>>>& ens,
                                               std::optional<double> C_override = std::nullopt) {
  ThreeSphereReport rep;
  rep.gamma = w.gamma;
  rep.S_star = w.S_star;
  rep.theta = w.theta;
  rep.log_K = chain_log_constant(w);
  const double a = rep.log_K / (2 * w.theta), b = (1 - w.theta) / w.theta;
  rep.C_fit = C_override ? *C_override : fit_three_sphere_constant(a, b, w.S_star);
  double aY = R.measure(R.Y), aE = R.measure(E);
  rep.records = parallel_map<ThreeSphereRecord>(ens.size(), [&](std::size_t i) {
    double iX = 0, iY = 0, iE = 0;
    for (std::size_t k = 0; k < R.size(); ++k) {
      if (!R.X[k]) continue;
      double v = std::norm(ens[i].second(R.z(k)));
      iX += v;
      if (R.Y[k]) iY += v;
      if (E[k]) iE += v;
    }
    iX *= R.cell();
    iY *= R.cell();
    iE *= R.cell();
    ThreeSphereRecord r;
    r.id = ens[i].first;
    if (!(iE > 0)) throw BergmanError("three_sphere_estimate: f vanishes on E below the quadrature floor");
    r.avg_Y = std::sqrt(iY / aY);
    r.avg_E = std::sqrt(iE / aE);
    r.N = 0.5 * std::log(iX / iY);
    r.ratio = r.avg_Y / r.avg_E;
    r.bound_chain = std::exp(a + b * r.N);
    r.bound_fitted = rep.C_fit * std::exp(rep.C_fit * (r.N + 1) * w.S_star);
    r.violation = r.ratio > r.bound_fitted * (1 + 1e-12) || r.ratio > r.bound_chain * (1 + 1e-12);
    return r;
  });
  for (const auto& r : rep.records) rep.violations += r.violation ? 1 : 0;
  return rep;
}

// ---------------------------------------------------------------------------
// Doubling index

struct DoublingIndex {
  double N = 0;
  double p = 2;
  Point z{};
  double r = 0, R = 0;
  double normalization = 0;  ///< log(|Y(z,R)| / |Y(z,r)|) / p: the value of N for |f| constant
};

namespace detail {
/// sup of |f| over the pullback sphere |phi_z(w)| = r (the maximum modulus is attained there).
inline double sup_on_sphere(const Domain& d, const Function& f, const Point& z, double r) {
  Point zb = d.to_ball(z);
  double m = 0;
  if (d.n == 1) {
    for (int k = 0; k < 4096; ++k) {
      Point u{std::polar(r, 2 * pi * k / 4096), 0.0};
      m = std::max(m, std::abs(f(d.from_ball(ball_automorphism(zb, u, 1)))));
    }
    return m;
  }
  for (int a = 0; a <= 32; ++a) {
    double c = std::cos(0.5 * pi * a / 32), s = std::sin(0.5 * pi * a / 32);
    for (int t1 = 0; t1 < 96; ++t1)
      for (int t2 = 0; t2 < 96; ++t2) {
        Point u{r * c * std::polar(1.0, 2 * pi * t1 / 96), r * s * std::polar(1.0, 2 * pi * t2 / 96)};
        m = std::max(m, std::abs(f(d.from_ball(ball_automorphism(zb, u, 2)))));
      }
  }
  return m;
}
}  // namespace detail

/// N_p(f, z, r, R) = log(||f||_{L^p(Y(z,R))} / ||f||_{L^p(Y(z,r))}) on a disc, ball or ellipsoid.
inline DoublingIndex doubling_index(const Domain& d, const Function& f, const Point& z, double r, double R, double p) {
  if (!(0 < r && r < R && R < 1)) throw BergmanError("doubling_index: need 0 < r < R < 1");
  DoublingIndex D;
  D.p = p;
  D.z = z;
  D.r = r;
  D.R = R;
  if (std::isinf(p)) {
    double a = detail::sup_on_sphere(d, f, z, r), b = detail::sup_on_sphere(d, f, z, R);
    if (!(a > 0)) throw BergmanError("doubling_index: vanishing inner norm");
    D.N = std::log(b / a);
    D.normalization = 0;
    return D;
  }
  PullbackSpec spec = d.n == 1 ? PullbackSpec{24, 2, 256, 8, 0.4} : PullbackSpec{12, 2, 40, 10, 0.4};
  auto integrate = [&](double rr) {
    auto q = pullback_rule(d, z, 0.0, rr, spec);
    double s = 0, vol = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      s += q.weights[i] * std::pow(std::abs(f(q.nodes[i])), p);
      vol += q.weights[i];
    }
    return std::pair<double, double>{s, vol};
  };
  auto [a, va] = integrate(r);
  auto [b, vb] = integrate(R);
  if (!(a > 0)) throw BergmanError("doubling_index: vanishing inner norm");
  D.N = std::log(b / a) / p;
  D.normalization = std::log(vb / va) / p;
  return D;
}

}  // namespace bergman
