#include "otma/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace otma {

namespace {
constexpr double kPi = std::numbers::pi;
}

std::string to_string(DomainKind k) {
  switch (k) {
    case DomainKind::interval: return "interval";
    case DomainKind::disk: return "disk";
    case DomainKind::ellipse: return "ellipse";
    case DomainKind::ball: return "ball";
    case DomainKind::point_cloud: return "point_cloud";
  }
  return "?";
}

DomainKind domain_kind_from_string(const std::string& s) {
  if (s == "interval") return DomainKind::interval;
  if (s == "disk") return DomainKind::disk;
  if (s == "ellipse") return DomainKind::ellipse;
  if (s == "ball") return DomainKind::ball;
  if (s == "point_cloud") return DomainKind::point_cloud;
  throw SchemaError("unknown domain kind '" + s + "'");
}

bool DomainSpec::is_boundary(std::size_t i) const {
  return std::find(boundary_idx.begin(), boundary_idx.end(), i) != boundary_idx.end();
}

double DomainSpec::signed_distance(const Vec& x) const {
  switch (params.kind) {
    case DomainKind::interval:
      return std::max(params.lo - x[0], x[0] - params.hi);
    case DomainKind::disk:
    case DomainKind::ball:
      return (x - params.center).norm() - params.radius;
    case DomainKind::ellipse: {
      Vec z = x - params.center;
      double q = 0.0;
      Vec gq(dim);
      for (int i = 0; i < dim; ++i) {
        q += (z[i] / params.radii[i]) * (z[i] / params.radii[i]);
        gq[i] = 2.0 * z[i] / (params.radii[i] * params.radii[i]);
      }
      const double gn = std::max(gq.norm(), 1e-14);
      return (q - 1.0) / gn;
    }
    case DomainKind::point_cloud: {
      // nearest boundary vertex with the side decided by its outward normal
      double best = std::numeric_limits<double>::infinity();
      double sd = 0.0;
      for (std::size_t b = 0; b < n_boundary(); ++b) {
        const Vec& p = boundary_node(b);
        const double dist = (x - p).norm();
        if (dist < best) {
          best = dist;
          sd = (x - p).dot(boundary_normals[b]) >= 0.0 ? dist : -dist;
        }
      }
      return sd;
    }
  }
  throw BadGeometry("signed_distance: unhandled kind");
}

double DomainSpec::phi(const Vec& x) const {
  const double d = -signed_distance(x);  // inward distance, positive inside
  return -params.def_a * d + params.def_b * d * d;
}

Vec DomainSpec::grad_phi(const Vec& x) const {
  const double d = -signed_distance(x);
  Vec gs(dim);  // gradient of the signed distance
  switch (params.kind) {
    case DomainKind::interval: {
      gs[0] = (x[0] - params.lo < params.hi - x[0]) ? -1.0 : 1.0;
      break;
    }
    case DomainKind::disk:
    case DomainKind::ball: {
      Vec z = x - params.center;
      const double r = z.norm();
      gs = r > 1e-14 ? Vec(z / r) : Vec(Vec::Zero(dim));
      break;
    }
    case DomainKind::ellipse: {
      Vec z = x - params.center;
      Vec gq(dim);
      for (int i = 0; i < dim; ++i) gq[i] = 2.0 * z[i] / (params.radii[i] * params.radii[i]);
      const double gn = std::max(gq.norm(), 1e-14);
      gs = gq / gn;
      break;
    }
    case DomainKind::point_cloud: {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t b = 0; b < n_boundary(); ++b) {
        const double dist = (x - boundary_node(b)).norm();
        if (dist < best) {
          best = dist;
          arg = b;
        }
      }
      gs = boundary_normals[arg];
      break;
    }
  }
  return (params.def_a + 2.0 * params.def_b * d) * gs;
}

Vec DomainSpec::centroid() const {
  Vec c = Vec::Zero(dim);
  double w = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    c += weights[i] * nodes[i];
    w += weights[i];
  }
  if (w <= 0.0) {
    for (const auto& x : nodes) c += x;
    return c / double(nodes.size());
  }
  return c / w;
}

double DomainSpec::total_weight() const {
  double w = 0.0;
  for (double wi : weights) w += wi;
  return w;
}

namespace {

DomainSpec build_interval(const DomainParams& p, int n) {
  if (!(p.hi > p.lo)) throw BadGeometry("interval requires hi > lo");
  if (n < 6) throw BadGeometry("interval resolution must be at least 6 nodes");
  DomainSpec d;
  d.params = p;
  d.dim = 1;
  d.grid_n1 = n;
  d.grid_n2 = 1;
  d.h = (p.hi - p.lo) / (n - 1);
  d.nodes.reserve(n);
  for (int i = 0; i < n; ++i) {
    Vec x(1);
    x[0] = p.lo + i * d.h;
    d.nodes.push_back(x);
    d.weights.push_back((i == 0 || i == n - 1) ? d.h / 2 : d.h);
  }
  d.boundary_idx = {0, std::size_t(n - 1)};
  Vec nl(1), nr(1);
  nl[0] = -1.0;
  nr[0] = 1.0;
  d.boundary_normals = {nl, nr};
  d.boundary_curvature = {Mat::Zero(1, 1), Mat::Zero(1, 1)};
  return d;
}

// Polar ring grid: r_i = (i + 1/2) dr with dr = R/(nr - 1/2), so the last
// ring lies exactly on the boundary and the first ring closes across the
// pole (requires even ntheta).
DomainSpec build_disk_like(const DomainParams& p, int resolution) {
  const bool ellipse = p.kind == DomainKind::ellipse;
  double ra, rb;
  if (ellipse) {
    if (p.radii.size() != 2 || p.radii.minCoeff() <= 0.0)
      throw BadGeometry("ellipse requires two positive semi-axes");
    ra = p.radii[0];
    rb = p.radii[1];
  } else {
    if (p.radius <= 0.0) throw BadGeometry("disk requires a positive radius");
    ra = rb = p.radius;
  }
  if (resolution < 6) throw BadGeometry("disk resolution must be at least 6");
  DomainSpec d;
  d.params = p;
  d.dim = 2;
  const int nr = resolution;
  int ntheta = resolution + (resolution % 2);  // even for the pole closure
  d.grid_n1 = nr;
  d.grid_n2 = ntheta;
  const double dr = 1.0 / (nr - 0.5);
  const double dt = 2.0 * kPi / ntheta;
  d.h = std::max(ra, rb) * dr;
  d.nodes.reserve(std::size_t(nr) * ntheta);
  for (int i = 0; i < nr; ++i) {
    const double r = (i + 0.5) * dr;
    const double r_out = std::min(1.0, r + 0.5 * dr);
    const double r_in = std::max(0.0, r - 0.5 * dr);
    const double cell = 0.5 * (r_out * r_out - r_in * r_in) * dt * ra * rb;
    for (int j = 0; j < ntheta; ++j) {
      const double t = j * dt;
      Vec x(2);
      x << p.center[0] + ra * r * std::cos(t), p.center[1] + rb * r * std::sin(t);
      d.nodes.push_back(x);
      d.weights.push_back(cell);
    }
  }
  for (int j = 0; j < ntheta; ++j) {
    const std::size_t idx = std::size_t(nr - 1) * ntheta + j;
    d.boundary_idx.push_back(idx);
    const Vec& x = d.nodes[idx];
    Vec z = x - p.center;
    Vec gq(2);
    gq << 2.0 * z[0] / (ra * ra), 2.0 * z[1] / (rb * rb);
    const double gn = gq.norm();
    const Vec gamma = gq / gn;
    d.boundary_normals.push_back(gamma);
    Mat Hq = Mat::Zero(2, 2);
    Hq(0, 0) = 2.0 / (ra * ra);
    Hq(1, 1) = 2.0 / (rb * rb);
    const Mat proj = Mat::Identity(2, 2) - gamma * gamma.transpose();
    d.boundary_curvature.push_back(proj * Hq / gn);
  }
  return d;
}

DomainSpec build_ball(const DomainParams& p, int resolution) {
  if (p.radius <= 0.0) throw BadGeometry("ball requires a positive radius");
  if (resolution < 4) throw BadGeometry("ball resolution must be at least 4");
  DomainSpec d;
  d.params = p;
  d.dim = 3;
  const double R = p.radius;
  const double h = 2.0 * R / resolution;
  d.h = h;
  for (int i = -resolution; i <= resolution; ++i)
    for (int j = -resolution; j <= resolution; ++j)
      for (int k = -resolution; k <= resolution; ++k) {
        Vec x(3);
        x << p.center[0] + i * h, p.center[1] + j * h, p.center[2] + k * h;
        if ((x - p.center).norm() <= R - 0.5 * h) {
          d.nodes.push_back(x);
          d.weights.push_back(h * h * h);
        }
      }
  if (d.nodes.empty()) throw BadGeometry("ball interior is empty at this resolution");
  // Fibonacci sphere for the boundary shell
  const int nb = resolution * resolution;
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < nb; ++k) {
    const double zz = 1.0 - 2.0 * (k + 0.5) / nb;
    const double rr = std::sqrt(std::max(0.0, 1.0 - zz * zz));
    const double th = golden * k;
    Vec gamma(3);
    gamma << rr * std::cos(th), rr * std::sin(th), zz;
    d.boundary_idx.push_back(d.nodes.size());
    d.nodes.push_back(p.center + R * gamma);
    d.weights.push_back(0.0);  // surface nodes carry no volume
    d.boundary_normals.push_back(gamma);
    const Mat proj = Mat::Identity(3, 3) - gamma * gamma.transpose();
    d.boundary_curvature.push_back(proj / R);
  }
  return d;
}

DomainSpec build_cloud(const DomainParams& p) {
  if (p.cloud_boundary.size() < 3) throw BadGeometry("point cloud needs an ordered boundary");
  DomainSpec d;
  d.params = p;
  d.dim = static_cast<int>(p.cloud_boundary.front().size());
  if (d.dim != 2) throw BadGeometry("point clouds are supported in dimension 2");
  for (const auto& x : p.cloud_interior) {
    d.nodes.push_back(x);
    d.weights.push_back(1.0);
  }
  const std::size_t nb = p.cloud_boundary.size();
  Vec centroid = Vec::Zero(2);
  for (const auto& x : p.cloud_boundary) centroid += x / double(nb);
  double edge_sum = 0.0;
  for (std::size_t k = 0; k < nb; ++k)
    edge_sum += (p.cloud_boundary[(k + 1) % nb] - p.cloud_boundary[k]).norm();
  d.h = edge_sum / double(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    d.boundary_idx.push_back(d.nodes.size());
    d.nodes.push_back(p.cloud_boundary[k]);
    d.weights.push_back(0.0);
    Vec gamma;
    if (k < p.cloud_normals.size()) {
      gamma = p.cloud_normals[k].normalized();
    } else {
      const Vec& prev = p.cloud_boundary[(k + nb - 1) % nb];
      const Vec& next = p.cloud_boundary[(k + 1) % nb];
      Vec t = (next - prev).normalized();
      gamma = Vec(2);
      gamma << t[1], -t[0];
      if (gamma.dot(p.cloud_boundary[k] - centroid) < 0.0) gamma = -gamma;
    }
    d.boundary_normals.push_back(gamma);
  }
  // curvature by differencing normals along the polygon
  for (std::size_t k = 0; k < nb; ++k) {
    const Vec& prev = p.cloud_boundary[(k + nb - 1) % nb];
    const Vec& next = p.cloud_boundary[(k + 1) % nb];
    const Vec& gp = d.boundary_normals[(k + nb - 1) % nb];
    const Vec& gn = d.boundary_normals[(k + 1) % nb];
    const double ds = (next - prev).norm();
    const Vec gamma = d.boundary_normals[k];
    Vec tau(2);
    tau << -gamma[1], gamma[0];
    const double kappa = ds > 1e-14 ? (gn - gp).dot(tau) / ds : 0.0;
    d.boundary_curvature.push_back(kappa * tau * tau.transpose());
  }
  return d;
}

}  // namespace

DomainSpec build_domain(const DomainParams& params, int resolution) {
  switch (params.kind) {
    case DomainKind::interval: return build_interval(params, resolution);
    case DomainKind::disk:
    case DomainKind::ellipse: return build_disk_like(params, resolution);
    case DomainKind::ball: return build_ball(params, resolution);
    case DomainKind::point_cloud: return build_cloud(params);
  }
  throw BadGeometry("build_domain: unhandled kind");
}

std::vector<Vec> c_image(const CostModel& model, const DomainSpec& domain, const Vec& y,
                         bool boundary_only) {
  std::vector<Vec> out;
  auto push = [&](const Vec& x) {
    check_validity(model, x, y);
    DerivativeBundle b = derivative_bundle(model, x, y, 2);
    out.push_back(b.c_y);
  };
  if (boundary_only) {
    out.reserve(domain.n_boundary());
    for (std::size_t b = 0; b < domain.n_boundary(); ++b) push(domain.boundary_node(b));
  } else {
    out.reserve(domain.nodes.size());
    for (const auto& x : domain.nodes) push(x);
  }
  return out;
}

std::string to_string(ConvexityVerdict v) {
  switch (v) {
    case ConvexityVerdict::uniformly_c_convex: return "uniformly_c_convex";
    case ConvexityVerdict::c_convex_degenerate: return "c_convex_degenerate";
    case ConvexityVerdict::fails: return "fails";
  }
  return "?";
}

ConvexityReport check_uniform_c_convexity(const CostModel& model, const DomainSpec& omega,
                                          const DomainSpec& omega_star,
                                          int max_target_samples) {
  ConvexityReport rep;
  rep.note = "delta0 sampled over boundary nodes and target samples, not a universal bound";
  const int n = omega.dim;
  if (n < 2) {
    rep.vacuous = true;
    rep.verdict = ConvexityVerdict::uniformly_c_convex;
    rep.delta0_estimate = std::numeric_limits<double>::infinity();
    rep.note = "vacuous in dimension 1: boundary has no tangent directions";
    return rep;
  }
  // subsample targets with a fixed stride
  std::vector<Vec> targets;
  const std::size_t stride =
      std::max<std::size_t>(1, omega_star.nodes.size() / std::max(1, max_target_samples));
  for (std::size_t i = 0; i < omega_star.nodes.size(); i += stride)
    targets.push_back(omega_star.nodes[i]);

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < omega.n_boundary(); ++b) {
    const Vec& x = omega.boundary_node(b);
    const Vec& gamma = omega.boundary_normals[b];
    const Mat& Dg = omega.boundary_curvature[b];
    for (const Vec& y : targets) {
      if (!is_admissible(model, x, y)) continue;
      DerivativeBundle bd;
      try {
        bd = derivative_bundle(model, x, y, 3);
      } catch (const SingularMixedHessian&) {
        continue;
      }
      const Vec mg = bd.c_xy_inv * gamma;  // (M gamma)_l = c^{l,k} gamma_k
      Mat P = Dg;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int l = 0; l < n; ++l) acc += bd.c_xxy(i, j, l) * mg[l];
          P(i, j) -= acc;
        }
      const Mat Ps = 0.5 * (P + P.transpose());
      ++rep.samples_used;
      if (n == 2) {
        Vec tau(2);
        tau << -gamma[1], gamma[0];
        const double val = tau.dot(Ps * tau);
        if (val < best) {
          best = val;
          rep.witness_x = x;
          rep.witness_y = y;
          rep.witness_tau = tau;
        }
      } else {
        // tangent-plane eigenvalues
        int axis = 0;
        for (int a = 1; a < 3; ++a)
          if (std::abs(gamma[a]) < std::abs(gamma[axis])) axis = a;
        Vec e = Vec::Zero(3);
        e[axis] = 1.0;
        Vec t1 = (e - gamma.dot(e) * gamma).normalized();
        Vec t2(3);
        t2 << gamma[1] * t1[2] - gamma[2] * t1[1], gamma[2] * t1[0] - gamma[0] * t1[2],
            gamma[0] * t1[1] - gamma[1] * t1[0];
        Eigen::Matrix2d T;
        T << t1.dot(Ps * t1), t1.dot(Ps * t2), t2.dot(Ps * t1), t2.dot(Ps * t2);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(T);
        const double val = es.eigenvalues()[0];
        if (val < best) {
          best = val;
          rep.witness_x = x;
          rep.witness_y = y;
          rep.witness_tau = std::abs(es.eigenvectors()(0, 0)) > std::abs(es.eigenvectors()(1, 0))
                                ? t1
                                : t2;
        }
      }
    }
  }
  if (rep.samples_used == 0) throw DomainViolation("no admissible boundary/target pair");
  rep.delta0_estimate = best;
  rep.verdict = best > kConvexityTol    ? ConvexityVerdict::uniformly_c_convex
                : best >= -kConvexityTol ? ConvexityVerdict::c_convex_degenerate
                                         : ConvexityVerdict::fails;
  return rep;
}

ConvexityReport check_uniform_cstar_convexity(const CostModel& model, const DomainSpec& omega,
                                              const DomainSpec& omega_star,
                                              int max_target_samples) {
  ConvexityReport rep =
      check_uniform_c_convexity(reflect(model), omega_star, omega, max_target_samples);
  rep.note += "; adjoint-cost check of the target domain";
  return rep;
}

std::vector<Vec> convex_hull_2d(std::vector<Vec> pts) {
  if (pts.size() < 3) return pts;
  std::sort(pts.begin(), pts.end(), [](const Vec& a, const Vec& b) {
    return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
  });
  auto cross = [](const Vec& o, const Vec& a, const Vec& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  std::vector<Vec> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  const std::size_t lower = k + 1;
  for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
    hull[k++] = *it;
  }
  hull.resize(k - 1);
  return hull;
}

double hull_defect_2d(const std::vector<Vec>& points) {
  if (points.empty()) return 0.0;
  if (points.front().size() == 1) return 0.0;  // 1d images are intervals
  if (points.front().size() != 2) throw BadGeometry("hull defect implemented in dimension 2");
  const auto hull = convex_hull_2d(points);
  if (hull.size() < 3) return 0.0;
  auto seg_dist = [](const Vec& p, const Vec& a, const Vec& b) {
    const Vec ab = b - a;
    const double t = std::clamp(ab.dot(p - a) / std::max(ab.squaredNorm(), 1e-300), 0.0, 1.0);
    return (p - (a + t * ab)).norm();
  };
  double defect = 0.0;
  for (const auto& p : points) {
    double dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < hull.size(); ++i)
      dist = std::min(dist, seg_dist(p, hull[i], hull[(i + 1) % hull.size()]));
    defect = std::max(defect, dist);
  }
  return defect;
}

}  // namespace otma
