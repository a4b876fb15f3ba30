#include "otma/pde_solver.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace otma {

namespace {
constexpr double kPi = std::numbers::pi;
}

void ProblemSpec::validate() const {
  for (const auto& x : omega.nodes)
    if (!(f(x) > 0.0)) throw Error("density f must be positive on the source domain");
  for (const auto& y : omega_star.nodes)
    if (!(g(y) > 0.0)) throw Error("density g must be positive on the target domain");
  double mf = 0.0, mg = 0.0;
  for (std::size_t i = 0; i < omega.nodes.size(); ++i) mf += omega.weights[i] * f(omega.nodes[i]);
  for (std::size_t j = 0; j < omega_star.nodes.size(); ++j)
    mg += omega_star.weights[j] * g(omega_star.nodes[j]);
  if (std::abs(mf - mg) > 1e-9 * std::max(1.0, mf) + 2.0 * omega.h * omega.h * std::abs(mf))
    throw MassImbalance("source and target masses differ beyond quadrature accuracy");
}

double ProblemSpec::mass() const {
  double mf = 0.0;
  for (std::size_t i = 0; i < omega.nodes.size(); ++i) mf += omega.weights[i] * f(omega.nodes[i]);
  return mf;
}

namespace {

using WeightList = std::vector<std::pair<int, double>>;  // (node, weight)

void add_gradient(NodeStencil& st, const WeightList& wl, const Vec& dir) {
  for (const auto& [node, w] : wl) {
    auto it = std::find(st.nodes.begin(), st.nodes.end(), node);
    std::size_t k;
    if (it == st.nodes.end()) {
      st.nodes.push_back(node);
      st.gw.push_back(Vec::Zero(dir.size()));
      st.hw.push_back(Mat::Zero(dir.size(), dir.size()));
      k = st.nodes.size() - 1;
    } else {
      k = static_cast<std::size_t>(it - st.nodes.begin());
    }
    st.gw[k] += w * dir;
  }
}

void add_hessian(NodeStencil& st, const WeightList& wl, const Mat& mat) {
  for (const auto& [node, w] : wl) {
    auto it = std::find(st.nodes.begin(), st.nodes.end(), node);
    std::size_t k;
    if (it == st.nodes.end()) {
      st.nodes.push_back(node);
      st.gw.push_back(Vec::Zero(mat.rows()));
      st.hw.push_back(Mat::Zero(mat.rows(), mat.cols()));
      k = st.nodes.size() - 1;
    } else {
      k = static_cast<std::size_t>(it - st.nodes.begin());
    }
    st.hw[k] += w * mat;
  }
}

Discretization discretize_interval(const DomainSpec& d) {
  const int n = d.grid_n1;
  const double h = d.h;
  Discretization disc;
  disc.stencils.resize(n);
  disc.boundary.assign(n, 0);
  disc.boundary_ordinal.assign(n, -1);
  disc.boundary[0] = disc.boundary[n - 1] = 1;
  disc.boundary_ordinal[0] = 0;
  disc.boundary_ordinal[n - 1] = 1;
  Vec e = Vec::Ones(1);
  Mat E = Mat::Ones(1, 1);
  for (int k = 0; k < n; ++k) {
    NodeStencil& st = disc.stencils[k];
    WeightList grad, hess;
    if (k == 0) {
      grad = {{0, -1.5 / h}, {1, 2.0 / h}, {2, -0.5 / h}};
      hess = {{0, 2.0 / (h * h)}, {1, -5.0 / (h * h)}, {2, 4.0 / (h * h)}, {3, -1.0 / (h * h)}};
    } else if (k == n - 1) {
      grad = {{n - 1, 1.5 / h}, {n - 2, -2.0 / h}, {n - 3, 0.5 / h}};
      hess = {{n - 1, 2.0 / (h * h)},
              {n - 2, -5.0 / (h * h)},
              {n - 3, 4.0 / (h * h)},
              {n - 4, -1.0 / (h * h)}};
    } else {
      grad = {{k - 1, -0.5 / h}, {k + 1, 0.5 / h}};
      hess = {{k - 1, 1.0 / (h * h)}, {k, -2.0 / (h * h)}, {k + 1, 1.0 / (h * h)}};
    }
    add_gradient(st, grad, e);
    add_hessian(st, hess, E);
  }
  return disc;
}

Discretization discretize_disk(const DomainSpec& d) {
  const int nr = d.grid_n1, nt = d.grid_n2;
  const double R = d.params.radius;
  const double dr = R / (nr - 0.5);
  const double dt = 2.0 * kPi / nt;
  Discretization disc;
  disc.stencils.resize(std::size_t(nr) * nt);
  disc.boundary.assign(disc.stencils.size(), 0);
  disc.boundary_ordinal.assign(disc.stencils.size(), -1);

  // neighbor index with pole closure: ring -1 maps to (ring 0, j + nt/2)
  auto idx = [&](int i, int j) {
    j = ((j % nt) + nt) % nt;
    if (i < 0) {
      i = -1 - i;
      j = (j + nt / 2) % nt;
    }
    return i * nt + j;
  };

  for (int i = 0; i < nr; ++i) {
    const double r = (i + 0.5) * dr;
    const bool bdy = (i == nr - 1);
    for (int j = 0; j < nt; ++j) {
      const int k = i * nt + j;
      if (bdy) {
        disc.boundary[k] = 1;
        disc.boundary_ordinal[k] = j;
      }
      const double th = j * dt;
      const double c = std::cos(th), s = std::sin(th);

      WeightList w_r, w_rr, w_t, w_tt, w_rt;
      if (!bdy) {
        w_r = {{idx(i - 1, j), -0.5 / dr}, {idx(i + 1, j), 0.5 / dr}};
        w_rr = {{idx(i - 1, j), 1.0 / (dr * dr)},
                {k, -2.0 / (dr * dr)},
                {idx(i + 1, j), 1.0 / (dr * dr)}};
        for (int a : {-1, 1})
          for (int b : {-1, 1})
            w_rt.push_back({idx(i + a, j + b), a * b * 0.25 / (dr * dt)});
      } else {
        w_r = {{idx(i, j), 1.5 / dr}, {idx(i - 1, j), -2.0 / dr}, {idx(i - 2, j), 0.5 / dr}};
        w_rr = {{idx(i, j), 2.0 / (dr * dr)},
                {idx(i - 1, j), -5.0 / (dr * dr)},
                {idx(i - 2, j), 4.0 / (dr * dr)},
                {idx(i - 3, j), -1.0 / (dr * dr)}};
        for (const auto& [If, wf] : WeightList{{i, 1.5 / dr}, {i - 1, -2.0 / dr}, {i - 2, 0.5 / dr}})
          for (int b : {-1, 1})
            w_rt.push_back({idx(static_cast<int>(If), j + b), wf * b * 0.5 / dt});
      }
      w_t = {{idx(i, j - 1), -0.5 / dt}, {idx(i, j + 1), 0.5 / dt}};
      w_tt = {{idx(i, j - 1), 1.0 / (dt * dt)},
              {k, -2.0 / (dt * dt)},
              {idx(i, j + 1), 1.0 / (dt * dt)}};

      NodeStencil& st = disc.stencils[k];
      Vec dir_r(2), dir_t(2);
      dir_r << c, s;
      dir_t << -s / r, c / r;
      add_gradient(st, w_r, dir_r);
      add_gradient(st, w_t, dir_t);

      Mat M_rr(2, 2), M_rt(2, 2), M_tt(2, 2), M_r(2, 2), M_t(2, 2);
      M_rr << c * c, c * s, c * s, s * s;
      M_rt << -2 * c * s / r, (c * c - s * s) / r, (c * c - s * s) / r, 2 * c * s / r;
      M_tt << s * s / (r * r), -c * s / (r * r), -c * s / (r * r), c * c / (r * r);
      M_r << s * s / r, -c * s / r, -c * s / r, c * c / r;
      M_t << 2 * c * s / (r * r), -(c * c - s * s) / (r * r), -(c * c - s * s) / (r * r),
          -2 * c * s / (r * r);
      add_hessian(st, w_rr, M_rr);
      add_hessian(st, w_rt, M_rt);
      add_hessian(st, w_tt, M_tt);
      add_hessian(st, w_r, M_r);
      add_hessian(st, w_t, M_t);
    }
  }
  return disc;
}

}  // namespace

Discretization build_discretization(const DomainSpec& domain) {
  switch (domain.params.kind) {
    case DomainKind::interval: return discretize_interval(domain);
    case DomainKind::disk: return discretize_disk(domain);
    default:
      throw BadGeometry("the solver grid supports interval and disk sources");
  }
}

PotentialField derive_field(const ProblemSpec& problem, const Discretization& disc,
                            const Vec& u) {
  const auto& nodes = problem.omega.nodes;
  const int n = problem.omega.dim;
  const std::size_t N = nodes.size();
  if (u.size() != static_cast<Eigen::Index>(N)) throw Error("derive_field: u size mismatch");
  PotentialField f;
  f.u = u;
  f.h = problem.omega.h;
  f.Du.resize(N);
  f.D2u.resize(N);
  f.w.resize(N);
  f.T.resize(N);
  f.min_eig_w = Vec(N);
  f.elliptic = true;
  for (std::size_t k = 0; k < N; ++k) {
    const NodeStencil& st = disc.stencils[k];
    Vec g = Vec::Zero(n);
    Mat H = Mat::Zero(n, n);
    for (std::size_t l = 0; l < st.nodes.size(); ++l) {
      g += st.gw[l] * u[st.nodes[l]];
      H += st.hw[l] * u[st.nodes[l]];
    }
    f.Du[k] = g;
    f.D2u[k] = 0.5 * (H + H.transpose());
    f.T[k] = solve_Y(problem.model, nodes[k], g);
    const Mat A = matrix_A(problem.model, nodes[k], g);
    f.w[k] = f.D2u[k] - A;
    if (n == 1) {
      f.min_eig_w[k] = f.w[k](0, 0);
    } else {
      Eigen::SelfAdjointEigenSolver<Mat> es(f.w[k], Eigen::EigenvaluesOnly);
      f.min_eig_w[k] = es.eigenvalues()[0];
    }
    if (!(f.min_eig_w[k] > 0.0)) f.elliptic = false;
  }
  return f;
}

double TargetShape::phi(const Vec& y) const {
  switch (kind) {
    case DomainKind::interval:
      return (y[0] - lo) * (y[0] - hi) / (hi - lo);
    case DomainKind::disk:
    case DomainKind::ball:
      return (y - center).norm() - radii[0];
    case DomainKind::ellipse: {
      double q = 0.0;
      Vec gq = Vec::Zero(y.size());
      for (int i = 0; i < y.size(); ++i) {
        const double z = y[i] - center[i];
        q += (z / radii[i]) * (z / radii[i]);
        gq[i] = 2.0 * z / (radii[i] * radii[i]);
      }
      return (q - 1.0) / std::max(gq.norm(), 1e-12);
    }
    default:
      throw BadGeometry("target shape: unsupported kind");
  }
}

Vec TargetShape::grad_phi(const Vec& y) const {
  switch (kind) {
    case DomainKind::interval: {
      Vec g(1);
      g[0] = (2.0 * y[0] - lo - hi) / (hi - lo);
      return g;
    }
    case DomainKind::disk:
    case DomainKind::ball: {
      Vec z = y - center;
      const double r = std::max(z.norm(), 1e-12);
      return Vec(z / r);
    }
    case DomainKind::ellipse: {
      Vec gq = Vec::Zero(y.size());
      for (int i = 0; i < y.size(); ++i)
        gq[i] = 2.0 * (y[i] - center[i]) / (radii[i] * radii[i]);
      return Vec(gq / std::max(gq.norm(), 1e-12));
    }
    default:
      throw BadGeometry("target shape: unsupported kind");
  }
}

TargetShape TargetShape::of_domain(const DomainSpec& d) {
  TargetShape s;
  s.kind = d.params.kind;
  switch (d.params.kind) {
    case DomainKind::interval:
      s.lo = d.params.lo;
      s.hi = d.params.hi;
      break;
    case DomainKind::disk:
    case DomainKind::ball:
      s.center = d.params.center;
      s.radii = Vec::Constant(d.dim, d.params.radius);
      break;
    case DomainKind::ellipse:
      s.center = d.params.center;
      s.radii = d.params.radii;
      break;
    default:
      throw BadGeometry("solver targets must be interval, disk, ellipse or ball");
  }
  return s;
}

ContinuationState make_state(const ProblemSpec& problem, double t, double sigma) {
  ContinuationState st;
  st.t = t;
  st.sigma = sigma;
  st.target_seed = TargetShape::of_domain(problem.omega_star);
  st.target_final = st.target_seed;
  return st;
}

TargetShape TargetShape::lerp(const TargetShape& a, const TargetShape& b, double t) {
  TargetShape s = b;
  switch (b.kind) {
    case DomainKind::interval:
      s.lo = (1 - t) * a.lo + t * b.lo;
      s.hi = (1 - t) * a.hi + t * b.hi;
      break;
    default:
      s.center = (1 - t) * a.center + t * b.center;
      s.radii = (1 - t) * a.radii + t * b.radii;
      break;
  }
  return s;
}

namespace {

// B(x, p) = |det c_xy(x, Y(x,p))| f(x) / g(Y(x,p))
double rhs_B(const ProblemSpec& pb, const Vec& x, const Vec& p) {
  const Vec y = solve_Y(pb.model, x, p);
  const double gy = pb.g(y);
  if (!(gy > 0.0)) throw DomainViolation("target density not positive at the image point");
  return scalar_B(pb.model, x, p, pb.f(x) / gy);
}

TargetShape estimate_image_shape(const ProblemSpec& pb, const Discretization& disc,
                                 const PotentialField& field) {
  TargetShape s = TargetShape::of_domain(pb.omega_star);
  const std::size_t N = field.T.size();
  if (s.kind == DomainKind::interval) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& y : field.T) {
      lo = std::min(lo, y[0]);
      hi = std::max(hi, y[0]);
    }
    s.lo = lo;
    s.hi = std::max(hi, lo + 1e-6);
    return s;
  }
  Vec c = Vec::Zero(pb.omega.dim);
  for (const auto& y : field.T) c += y / double(N);
  double rad = 0.0;
  long nb = 0;
  for (std::size_t k = 0; k < N; ++k)
    if (disc.boundary[k]) {
      rad += (field.T[k] - c).norm();
      ++nb;
    }
  rad = nb > 0 ? rad / nb : 1e-3;
  s.center = c;
  s.radii = Vec::Constant(pb.omega.dim, std::max(rad, 1e-6));
  if (s.kind == DomainKind::ellipse) s.kind = DomainKind::disk;  // seed image treated round
  return s;
}

Vec quadratic_seed_values(const ProblemSpec& pb, double kappa, const Vec& x0, const Vec& p0) {
  const auto& nodes = pb.omega.nodes;
  Vec u(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const Vec d = nodes[k] - x0;
    u[k] = 0.5 * kappa * d.squaredNorm() + p0.dot(d);
  }
  return u;
}

SeedResult sup_c_seed(const ProblemSpec& pb, const Discretization& disc) {
  // supremum of cost sections over inward-pulled target samples with
  // hemisphere offsets (so the active anchor varies smoothly with x), then
  // grid mollification until strictly elliptic
  const Vec yc = pb.omega_star.centroid();
  const Vec x0 = pb.omega.centroid();
  const TargetShape tgt = TargetShape::of_domain(pb.omega_star);
  const double r0 = 0.45 * (pb.omega_star.params.kind == DomainKind::interval
                                ? (tgt.hi - tgt.lo)
                                : 2.0 * tgt.radii.minCoeff());
  std::vector<Vec> anchors;
  std::vector<double> offsets;
  const std::size_t stride = std::max<std::size_t>(1, pb.omega_star.nodes.size() / 128);
  for (std::size_t j = 0; j < pb.omega_star.nodes.size(); j += stride) {
    Vec y = yc + 0.8 * (pb.omega_star.nodes[j] - yc);
    const double rr = (y - yc).squaredNorm();
    if (rr >= r0 * r0) y = yc + (0.99 * r0 / std::sqrt(rr)) * (y - yc);
    anchors.push_back(y);
    offsets.push_back(std::sqrt(std::max(1e-12, r0 * r0 - (y - yc).squaredNorm())));
  }

  const auto& nodes = pb.omega.nodes;
  Vec u(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < anchors.size(); ++a)
      best = std::max(best, evaluate(pb.model, nodes[k], anchors[a]) -
                                evaluate(pb.model, x0, anchors[a]) + offsets[a]);
    u[k] = best;
  }
  // mollify on the grid (interior only; boundary stencils are one-sided) and
  // stiffen remaining flat pieces with a small paraboloid until strictly
  // elliptic
  for (int round = 0; round <= 6; ++round) {
    if (round > 0) {
      Vec sm = u;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (disc.boundary[k]) continue;
        const auto& st = disc.stencils[k];
        double acc = 0.0;
        for (int node : st.nodes) acc += u[node];
        sm[k] = 0.5 * u[k] + 0.5 * acc / double(st.nodes.size());
      }
      u = sm;
    }
    for (double eps : {0.0, 1e-3, 1e-2, 0.1, 0.5}) {
      Vec trial = u;
      for (std::size_t k = 0; k < nodes.size(); ++k)
        trial[k] += 0.5 * eps * (nodes[k] - x0).squaredNorm();
      try {
        PotentialField f = derive_field(pb, disc, trial);
        if (f.elliptic) {
          SeedResult res;
          res.field = std::move(f);
          res.kappa = eps;
          res.mode = "sup_c_functions";
          return res;
        }
      } catch (const Error&) {
        // inadmissible blend, try the next one
      }
    }
  }
  throw SeedFailure("sup-of-cost-sections seed did not become elliptic under mollification");
}

struct AssembledSystem {
  Eigen::SparseMatrix<double> J;
  Vec rhs;
};

double residual_norm(const ProblemSpec& pb, const Discretization& disc, const Vec& r) {
  double ri = 0.0, rb = 0.0;
  for (Eigen::Index k = 0; k < r.size(); ++k)
    (disc.boundary[k] ? rb : ri) = std::max(disc.boundary[k] ? rb : ri, std::abs(r[k]));
  return std::max(ri, rb);
}

}  // namespace

SeedResult initial_guess(const ProblemSpec& problem, const Discretization& disc,
                         Schedule::SeedMode mode) {
  const Vec x0 = problem.omega.centroid();
  const Vec y0 = problem.omega_star.centroid();

  // degenerate target: nothing to aim at below grid resolution
  const TargetShape tgt = TargetShape::of_domain(problem.omega_star);
  const double target_extent = problem.omega_star.params.kind == DomainKind::interval
                                   ? tgt.hi - tgt.lo
                                   : 2.0 * tgt.radii.minCoeff();
  if (target_extent < problem.omega.h)
    throw SeedFailure("target extent is below the grid resolution");

  if (mode != Schedule::SeedMode::sup_c_functions) {
    Vec p0;
    bool have_p0 = false;
    try {
      p0 = derivative_bundle(problem.model, x0, y0, 2).c_x;
      have_p0 = true;
    } catch (const Error&) {
      have_p0 = false;
    }
    if (have_p0) {
      std::vector<double> kappas;
      for (int e = 1; e <= 8; ++e) kappas.push_back(std::pow(2.0, -e));
      for (int e = 0; e <= 6; ++e) kappas.push_back(std::pow(2.0, e));
      for (double kappa : kappas) {
        const Vec u = quadratic_seed_values(problem, kappa, x0, p0);
        try {
          PotentialField f = derive_field(problem, disc, u);
          if (!f.elliptic) continue;
          for (std::size_t k = 0; k < f.T.size(); ++k) rhs_B(problem, problem.omega.nodes[k], f.Du[k]);
          SeedResult res;
          res.field = std::move(f);
          res.kappa = kappa;
          res.mode = "quadratic";
          return res;
        } catch (const Error&) {
          continue;
        }
      }
    }
    if (mode == Schedule::SeedMode::quadratic)
      throw SeedFailure("no admissible quadratic seed in the curvature scan");
  }
  return sup_c_seed(problem, disc);
}

Vec residual(const ProblemSpec& problem, const Discretization& disc,
             const PotentialField& field, const ContinuationState& state) {
  const std::size_t N = problem.omega.nodes.size();
  if (!field.elliptic) throw EllipticityLost("residual requested on a non-elliptic field");
  Vec r(N);
  const TargetShape tgt = state.target_at(state.t);
  for (std::size_t k = 0; k < N; ++k) {
    const Vec& x = problem.omega.nodes[k];
    if (disc.boundary[k]) {
      r[k] = tgt.phi(field.T[k]);
      continue;
    }
    const double off = state.f_offset.size() == static_cast<Eigen::Index>(N)
                           ? state.f_offset[k]
                           : 0.0;
    const double B = rhs_B(problem, x, field.Du[k]);
    r[k] = field.w[k].determinant() -
           std::exp(state.sigma * field.u[k] + (1.0 - state.t) * off) * B;
  }
  return r;
}

PotentialField newton_step(const ProblemSpec& problem, const Discretization& disc,
                           const PotentialField& field, const ContinuationState& state,
                           NewtonInfo* info) {
  const std::size_t N = problem.omega.nodes.size();
  const int n = problem.omega.dim;
  const Vec r = residual(problem, disc, field, state);
  const double r0 = residual_norm(problem, disc, r);
  const TargetShape tgt = state.target_at(state.t);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(N * 12);
  for (std::size_t k = 0; k < N; ++k) {
    const Vec& x = problem.omega.nodes[k];
    const NodeStencil& st = disc.stencils[k];
    if (disc.boundary[k]) {
      const DerivativeBundle b = derivative_bundle(problem.model, x, field.T[k], 2);
      const Vec beta = b.c_xy_inv.transpose() * tgt.grad_phi(field.T[k]);
      for (std::size_t l = 0; l < st.nodes.size(); ++l) {
        const double coef = beta.dot(st.gw[l]);
        if (coef != 0.0) trip.emplace_back(k, st.nodes[l], coef);
      }
      continue;
    }
    const double off =
        state.f_offset.size() == static_cast<Eigen::Index>(N) ? state.f_offset[k] : 0.0;
    const double E = std::exp(state.sigma * field.u[k] + (1.0 - state.t) * off);
    const double B = rhs_B(problem, x, field.Du[k]);
    const double detw = field.w[k].determinant();
    const Mat winv = field.w[k].inverse();

    // d/dp of A and B by central differences
    const double hp = 1e-6 * std::max(1.0, field.Du[k].norm());
    std::vector<Mat> Ap(n);
    Vec Bp(n);
    for (int m = 0; m < n; ++m) {
      Vec e = Vec::Zero(n);
      e[m] = hp;
      Ap[m] = (matrix_A(problem.model, x, field.Du[k] + e) -
               matrix_A(problem.model, x, field.Du[k] - e)) /
              (2 * hp);
      Bp[m] =
          (rhs_B(problem, x, field.Du[k] + e) - rhs_B(problem, x, field.Du[k] - e)) / (2 * hp);
    }
    for (std::size_t l = 0; l < st.nodes.size(); ++l) {
      Mat dw = st.hw[l];
      for (int m = 0; m < n; ++m) dw -= Ap[m] * st.gw[l][m];
      double coef = detw * (winv * dw).trace();
      coef -= E * Bp.dot(st.gw[l]);
      if (st.nodes[l] == static_cast<int>(k)) coef -= E * state.sigma * B;
      if (coef != 0.0) trip.emplace_back(k, st.nodes[l], coef);
    }
  }

  Eigen::SparseMatrix<double> J(N, N);
  J.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(J);
  if (lu.info() != Eigen::Success)
    throw LinearSolveFailure("sparse LU factorization of the linearized system failed");
  const Vec v = lu.solve(-r);
  if (lu.info() != Eigen::Success) throw LinearSolveFailure("linearized solve failed");

  double alpha = 1.0;
  while (alpha >= state.newton.min_alpha) {
    try {
      PotentialField trial = derive_field(problem, disc, field.u + alpha * v);
      if (trial.elliptic) {
        const Vec rt = residual(problem, disc, trial, state);
        const double r1 = residual_norm(problem, disc, rt);
        if (r1 < r0) {
          if (info != nullptr) {
            info->alpha = alpha;
            info->res_before = r0;
            info->res_after = r1;
            info->min_eig_w = trial.min_eig_w.minCoeff();
          }
          return trial;
        }
      }
    } catch (const Error&) {
      // inadmissible trial, shrink
    }
    alpha *= 0.5;
  }
  throw StepTooSmall("damping fell below min_alpha without residual decrease");
}

namespace {

struct NewtonOutcome {
  PotentialField field;
  int iters = 0;
  double res0 = 0.0, res1 = 0.0;
  double min_eig = 0.0;
  bool converged = false;
};

NewtonOutcome newton_solve(const ProblemSpec& pb, const Discretization& disc,
                           const PotentialField& start, const ContinuationState& state) {
  NewtonOutcome out;
  out.field = start;
  out.res0 = residual_norm(pb, disc, residual(pb, disc, start, state));
  double res = out.res0;
  double bscale = 1.0;
  for (std::size_t k = 0; k < pb.omega.nodes.size();
       k += std::max<std::size_t>(1, pb.omega.nodes.size() / 8)) {
    if (disc.boundary[k]) continue;
    try {
      bscale = std::max(bscale, std::abs(rhs_B(pb, pb.omega.nodes[k], start.Du[k])));
    } catch (const Error&) {
    }
  }
  const double tol = state.newton.tol * bscale;
  out.min_eig = start.min_eig_w.minCoeff();
  for (int it = 0; it < state.newton.max_iter; ++it) {
    if (res <= tol) {
      out.converged = true;
      break;
    }
    NewtonInfo info;
    out.field = newton_step(pb, disc, out.field, state, &info);
    res = info.res_after;
    out.min_eig = info.min_eig_w;
    ++out.iters;
  }
  out.res1 = res;
  if (res <= tol) out.converged = true;
  return out;
}

double min_beta_gamma(const ProblemSpec& pb, const Discretization& disc,
                      const PotentialField& field, const TargetShape& tgt) {
  double mn = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pb.omega.nodes.size(); ++k) {
    if (!disc.boundary[k]) continue;
    const int ord = disc.boundary_ordinal[k];
    const DerivativeBundle b =
        derivative_bundle(pb.model, pb.omega.nodes[k], field.T[k], 2);
    const Vec beta = b.c_xy_inv.transpose() * tgt.grad_phi(field.T[k]);
    mn = std::min(mn, beta.dot(pb.omega.boundary_normals[ord]));
  }
  return mn;
}

}  // namespace

SolveResult continuation_solve(const ProblemSpec& problem, const Schedule& schedule) {
  problem.validate();
  const Discretization disc = build_discretization(problem.omega);
  SolveResult result;

  SeedResult seed = initial_guess(problem, disc, schedule.seed_mode);
  result.kappa_seed = seed.kappa;
  result.seed_mode = seed.mode;

  ContinuationState state;
  state.sigma = schedule.sigma0;
  state.t = 0.0;
  state.dt = schedule.dt0;
  state.dt_min = schedule.dt_min;
  state.newton = schedule.newton;
  state.target_final = TargetShape::of_domain(problem.omega_star);
  state.target_seed = estimate_image_shape(problem, disc, seed.field);

  // interior forcing that makes the seed the exact t = 0 solution
  const std::size_t N = problem.omega.nodes.size();
  state.f_offset = Vec::Zero(N);
  for (std::size_t k = 0; k < N; ++k) {
    if (disc.boundary[k]) continue;
    const double B = rhs_B(problem, problem.omega.nodes[k], seed.field.Du[k]);
    state.f_offset[k] = -schedule.sigma0 * seed.field.u[k] +
                        std::log(seed.field.w[k].determinant() / B);
  }

  PotentialField current = seed.field;

  auto record = [&](const std::string& phase, double tval, double sigval, double dt,
                    const NewtonOutcome& out, bool accepted) {
    TraceEntry e;
    e.phase = phase;
    e.t = tval;
    e.sigma = sigval;
    e.dt = dt;
    e.newton_iters = out.iters;
    e.res_initial = out.res0;
    e.res_final = out.res1;
    const PotentialField& f = out.field.u.size() > 0 ? out.field : current;
    e.min_eig_w = f.min_eig_w.minCoeff();
    try {
      e.min_beta_gamma = min_beta_gamma(problem, disc, f, state.target_at(tval));
    } catch (const Error&) {
      e.min_beta_gamma = std::numeric_limits<double>::quiet_NaN();
    }
    e.accepted = accepted;
    result.trace.push_back(e);
  };
  auto snapshot = [&]() {
    SigmaSnapshot snap;
    snap.sigma = state.sigma;
    snap.sup_sigma_u = (state.sigma * current.u).cwiseAbs().maxCoeff();
    snap.u_normalized = current.u.array() - current.u.mean();
    result.sigma_history.push_back(std::move(snap));
  };

  // settle the seed at t = 0 (boundary shape estimate may be slightly off)
  {
    auto out = newton_solve(problem, disc, current, state);
    record("seed", state.t, state.sigma, 0.0, out, out.converged);
    if (!out.converged) {
      result.stall_reason = "seed stage did not converge";
      result.field = current;
      return result;
    }
    current = out.field;
  }

  // phase 1: t from 0 to 1
  while (state.t < 1.0 - 1e-12) {
    const double t_try = std::min(1.0, state.t + state.dt);
    ContinuationState trial_state = state;
    trial_state.t = t_try;
    bool ok = false;
    NewtonOutcome out;
    try {
      out = newton_solve(problem, disc, current, trial_state);
      ok = out.converged;
    } catch (const Error&) {
      ok = false;
    }
    record("t", t_try, state.sigma, state.dt, out, ok);
    if (ok) {
      state.t = t_try;
      current = out.field;
      state.dt = std::min(state.dt * state.grow, 0.5);
    } else {
      state.dt *= state.shrink;
      if (state.dt < state.dt_min) {
        result.stall_reason = "continuation step underflow in t";
        result.field = current;
        return result;
      }
    }
  }
  snapshot();  // sigma0 state at t = 1

  // phase 2: sigma down to sigma_min, geometric stages with bisection retry
  while (state.sigma > schedule.sigma_min * (1.0 + 1e-9)) {
    const double stage = std::max(schedule.sigma_min, state.sigma * schedule.sigma_factor);
    double next = stage;
    int attempts = 0;
    while (state.sigma > stage * (1.0 + 1e-9)) {
      ContinuationState trial_state = state;
      trial_state.sigma = next;
      bool ok = false;
      NewtonOutcome out;
      try {
        out = newton_solve(problem, disc, current, trial_state);
        ok = out.converged;
      } catch (const Error&) {
        ok = false;
      }
      record("sigma", state.t, next, 0.0, out, ok);
      if (ok) {
        state.sigma = next;
        current = out.field;
        next = stage;
      } else {
        next = std::sqrt(state.sigma * next);  // geometric bisection toward current
        if (++attempts > 20) {
          result.stall_reason = "continuation stalled in sigma";
          result.field = current;
          return result;
        }
      }
    }
    snapshot();
  }

  // mean-zero normalization
  Vec u = current.u.array() - current.u.mean();
  result.field = derive_field(problem, disc, u);
  result.converged = true;
  return result;
}

MapResult map_T(const ProblemSpec& problem, const Discretization& disc,
                const PotentialField& field) {
  MapResult res;
  res.T = field.T;
  res.in_target.resize(field.T.size());
  for (std::size_t k = 0; k < field.T.size(); ++k)
    res.in_target[k] =
        problem.omega_star.signed_distance(field.T[k]) <= 2.0 * problem.omega.h;
  (void)disc;
  return res;
}

}  // namespace otma
