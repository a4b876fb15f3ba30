#include "otma/cost_model.hpp"

#include <cmath>

namespace otma {

namespace {

double sqr(double t) { return t * t; }

}  // namespace

std::string to_string(CostId id) {
  switch (id) {
    case CostId::quadratic: return "quadratic";
    case CostId::sqrt_plus: return "sqrt_plus";
    case CostId::sqrt_minus: return "sqrt_minus";
    case CostId::dot_plus_fg: return "dot_plus_fg";
    case CostId::power: return "power";
    case CostId::power_compound: return "power_compound";
  }
  return "?";
}

CostId cost_id_from_string(const std::string& s) {
  if (s == "quadratic") return CostId::quadratic;
  if (s == "sqrt_plus") return CostId::sqrt_plus;
  if (s == "sqrt_minus") return CostId::sqrt_minus;
  if (s == "dot_plus_fg") return CostId::dot_plus_fg;
  if (s == "power") return CostId::power;
  if (s == "power_compound") return CostId::power_compound;
  throw SchemaError("unknown cost id '" + s + "'");
}

double RadialPoly::eval(const Vec& x) const {
  const double rho = (x - center).squaredNorm();
  double v = 0.0, rk = 1.0;
  for (int k = 0; k < coeffs.size(); ++k, rk *= rho) v += coeffs[k] * rk;
  return v;
}

Vec RadialPoly::grad(const Vec& x) const {
  const Vec d = x - center;
  const double rho = d.squaredNorm();
  double fp = 0.0, rk = 1.0;
  for (int k = 1; k < coeffs.size(); ++k, rk *= rho) fp += k * coeffs[k] * rk;
  return 2.0 * fp * d;
}

Mat RadialPoly::hess(const Vec& x) const {
  const Vec d = x - center;
  const double rho = d.squaredNorm();
  double fp = 0.0, fpp = 0.0, rk = 1.0;
  for (int k = 1; k < coeffs.size(); ++k, rk *= rho) fp += k * coeffs[k] * rk;
  rk = 1.0;
  for (int k = 2; k < coeffs.size(); ++k, rk *= rho) fpp += k * (k - 1) * coeffs[k] * rk;
  return 2.0 * fp * Mat::Identity(x.size(), x.size()) + 4.0 * fpp * d * d.transpose();
}

bool RadialPoly::convex() const {
  for (int k = 1; k < coeffs.size(); ++k)
    if (coeffs[k] < 0.0) return false;
  return true;
}

CostModel CostModel::Quadratic(int dim) {
  CostModel c;
  c.id = CostId::quadratic;
  c.dim = dim;
  return c;
}

CostModel CostModel::SqrtPlus(int dim) {
  CostModel c;
  c.id = CostId::sqrt_plus;
  c.dim = dim;
  return c;
}

CostModel CostModel::SqrtMinus(int dim) {
  CostModel c;
  c.id = CostId::sqrt_minus;
  c.dim = dim;
  return c;
}

CostModel CostModel::Power(int dim, double m, int sign) {
  if (sign != 1 && sign != -1) throw SchemaError("power cost sign must be +1 or -1");
  CostModel c;
  c.id = CostId::power;
  c.dim = dim;
  c.m = m;
  c.sign = sign;
  return c;
}

CostModel CostModel::PowerCompound(int dim, double p) {
  if (p < 1.0 || p > 2.0) throw SchemaError("power_compound requires 1 <= p <= 2");
  CostModel c;
  c.id = CostId::power_compound;
  c.dim = dim;
  c.p = p;
  return c;
}

CostModel CostModel::DotPlusFG(int dim, RadialPoly f, RadialPoly g) {
  if (!f.convex() || !g.convex())
    throw SchemaError("dot_plus_fg requires convex f, g (nonnegative radial coefficients)");
  CostModel c;
  c.id = CostId::dot_plus_fg;
  c.dim = dim;
  c.f = std::move(f);
  c.g = std::move(g);
  return c;
}

CostModel reflect(const CostModel& model) {
  CostModel r = model;
  r.reflected = !r.reflected;
  return r;
}

namespace {

CostModel base_of(const CostModel& model) {
  CostModel b = model;
  b.reflected = false;
  return b;
}

// phi(rho) with rho = |x-y|^2 for the radially symmetric families.
// Returns derivatives phi^(0..4).
std::array<double, 5> phi_jet(const CostModel& model, double rho) {
  std::array<double, 5> d{};
  switch (model.id) {
    case CostId::sqrt_plus:
    case CostId::power_compound: {
      const double q = (model.id == CostId::sqrt_plus) ? 0.5 : model.p / 2.0;
      double prod = 1.0;
      for (int k = 0; k <= 4; ++k) {
        d[k] = -prod * std::pow(1.0 + rho, q - k);
        prod *= (q - k);
      }
      return d;
    }
    case CostId::sqrt_minus: {
      const double a = 0.5, w = 1.0 - rho;
      double prod = 1.0, sgn = 1.0;
      for (int k = 0; k <= 4; ++k) {
        d[k] = -sgn * prod * std::pow(w, a - k);
        prod *= (a - k);
        sgn = -sgn;
      }
      return d;
    }
    case CostId::power: {
      const double s = model.sign;
      if (model.m == 0.0) {
        d[0] = 0.5 * s * std::log(rho);
        double fact = 1.0, sgn = 1.0;
        for (int k = 1; k <= 4; ++k) {
          d[k] = 0.5 * s * sgn * fact / std::pow(rho, k);
          sgn = -sgn;
          fact *= k;
        }
        return d;
      }
      const double mu = model.m / 2.0;
      double prod = 1.0;
      for (int k = 0; k <= 4; ++k) {
        d[k] = (s / model.m) * prod * std::pow(rho, mu - k);
        prod *= (mu - k);
      }
      return d;
    }
    default:
      throw Error("phi_jet: not a radial cost");
  }
}

bool is_radial(CostId id) {
  return id == CostId::sqrt_plus || id == CostId::sqrt_minus || id == CostId::power ||
         id == CostId::power_compound;
}

// Order-2 analytic jet, shared by both derivative modes.
void bundle2(const CostModel& model, const Vec& x, const Vec& y, DerivativeBundle& b) {
  const int n = model.dim;
  const Mat I = Mat::Identity(n, n);
  switch (model.id) {
    case CostId::quadratic:
      b.c = x.dot(y);
      b.c_x = y;
      b.c_y = x;
      b.c_xx = Mat::Zero(n, n);
      b.c_yy = Mat::Zero(n, n);
      b.c_xy = I;
      return;
    case CostId::dot_plus_fg: {
      const double fv = model.f.eval(x), gv = model.g.eval(y);
      const Vec fg = model.f.grad(x), gg = model.g.grad(y);
      b.c = x.dot(y) + fv * gv;
      b.c_x = y + fg * gv;
      b.c_y = x + fv * gg;
      b.c_xx = model.f.hess(x) * gv;
      b.c_yy = fv * model.g.hess(y);
      b.c_xy = I + fg * gg.transpose();
      return;
    }
    default: {
      const Vec d = x - y;
      const auto phi = phi_jet(model, d.squaredNorm());
      const Mat dd = d * d.transpose();
      b.c = phi[0];
      b.c_x = 2.0 * phi[1] * d;
      b.c_y = -b.c_x;
      b.c_xx = 2.0 * phi[1] * I + 4.0 * phi[2] * dd;
      b.c_yy = b.c_xx;
      b.c_xy = -b.c_xx;
      return;
    }
  }
}

void bundle_high_analytic(const CostModel& model, const Vec& x, const Vec& y,
                          DerivativeBundle& b) {
  const int n = model.dim;
  b.c_xxy = Tensor3(n);
  b.c_xyy = Tensor3(n);
  b.c_xxyy = Tensor4(n);
  if (model.id == CostId::quadratic) return;
  if (model.id == CostId::dot_plus_fg) {
    const Mat Hf = model.f.hess(x), Hg = model.g.hess(y);
    const Vec fg = model.f.grad(x), gg = model.g.grad(y);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          b.c_xxy(i, j, k) = Hf(i, j) * gg[k];
          b.c_xyy(i, j, k) = fg[i] * Hg(j, k);
        }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int r = 0; r < n; ++r)
          for (int s = 0; s < n; ++s) b.c_xxyy(i, j, r, s) = Hf(i, j) * Hg(r, s);
    return;
  }
  const Vec d = x - y;
  const auto phi = phi_jet(model, d.squaredNorm());
  const double p2 = phi[2], p3 = phi[3], p4 = phi[4];
  auto kd = [](int a, int c) { return a == c ? 1.0 : 0.0; };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const double sym = d[k] * kd(i, j) + d[i] * kd(j, k) + d[j] * kd(i, k);
        const double cub = d[i] * d[j] * d[k];
        b.c_xxy(i, j, k) = -(4.0 * p2 * sym + 8.0 * p3 * cub);
        b.c_xyy(i, j, k) = +(4.0 * p2 * sym + 8.0 * p3 * cub);
      }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int r = 0; r < n; ++r)
        for (int s = 0; s < n; ++s) {
          const double t2 = kd(r, s) * kd(i, j) + kd(i, s) * kd(j, r) + kd(j, s) * kd(i, r);
          const double t3 = d[r] * d[s] * kd(i, j) + kd(r, s) * d[i] * d[j] +
                            kd(i, r) * d[s] * d[j] + kd(j, r) * d[s] * d[i] +
                            kd(i, s) * d[r] * d[j] + kd(j, s) * d[r] * d[i];
          b.c_xxyy(i, j, r, s) =
              4.0 * p2 * t2 + 8.0 * p3 * t3 + 16.0 * p4 * d[i] * d[j] * d[r] * d[s];
        }
}

// Central differences of the next-lower analytic order.
void bundle_fd(const CostModel& model, const Vec& x, const Vec& y, int order,
               DerivativeBundle& b) {
  const int n = model.dim;
  const double h = model.fd_step;
  auto jet2 = [&](const Vec& xx, const Vec& yy) {
    DerivativeBundle t;
    bundle2(model, xx, yy, t);
    return t;
  };
  // first order from c, second from first, etc.
  b.c_x = Vec::Zero(n);
  b.c_y = Vec::Zero(n);
  for (int i = 0; i < n; ++i) {
    Vec e = Vec::Zero(n);
    e[i] = h;
    b.c_x[i] = (evaluate(model, x + e, y) - evaluate(model, x - e, y)) / (2 * h);
    b.c_y[i] = (evaluate(model, x, y + e) - evaluate(model, x, y - e)) / (2 * h);
  }
  Mat cxx = Mat::Zero(n, n), cyy = Mat::Zero(n, n), cxy = Mat::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    Vec e = Vec::Zero(n);
    e[j] = h;
    cxx.col(j) = (jet2(x + e, y).c_x - jet2(x - e, y).c_x) / (2 * h);
    cyy.col(j) = (jet2(x, y + e).c_y - jet2(x, y - e).c_y) / (2 * h);
    cxy.col(j) = (jet2(x, y + e).c_x - jet2(x, y - e).c_x) / (2 * h);
  }
  b.c_xx = 0.5 * (cxx + cxx.transpose());
  b.c_yy = 0.5 * (cyy + cyy.transpose());
  b.c_xy = cxy;
  if (order < 3) return;
  b.c_xxy = Tensor3(n);
  b.c_xyy = Tensor3(n);
  for (int k = 0; k < n; ++k) {
    Vec e = Vec::Zero(n);
    e[k] = h;
    const Mat dxx = (jet2(x, y + e).c_xx - jet2(x, y - e).c_xx) / (2 * h);
    const Mat dyy = (jet2(x + e, y).c_yy - jet2(x - e, y).c_yy) / (2 * h);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        b.c_xxy(i, j, k) = dxx(i, j);
        b.c_xyy(k, i, j) = dyy(i, j);
      }
  }
  if (order < 4) return;
  b.c_xxyy = Tensor4(n);
  const Mat c0 = jet2(x, y).c_xx;
  for (int r = 0; r < n; ++r)
    for (int s = r; s < n; ++s) {
      Vec er = Vec::Zero(n), es = Vec::Zero(n);
      er[r] = h;
      es[s] = h;
      Mat drs;
      if (r == s)
        drs = (jet2(x, y + er).c_xx - 2.0 * c0 + jet2(x, y - er).c_xx) / (h * h);
      else
        drs = (jet2(x, y + er + es).c_xx - jet2(x, y + er - es).c_xx -
               jet2(x, y - er + es).c_xx + jet2(x, y - er - es).c_xx) /
              (4 * h * h);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          b.c_xxyy(i, j, r, s) = drs(i, j);
          b.c_xxyy(i, j, s, r) = drs(i, j);
        }
    }
}

DerivativeBundle reflect_bundle(const DerivativeBundle& b) {
  DerivativeBundle r;
  r.dim = b.dim;
  r.order = b.order;
  r.c = b.c;
  r.c_x = b.c_y;
  r.c_y = b.c_x;
  r.c_xx = b.c_yy;
  r.c_yy = b.c_xx;
  r.c_xy = b.c_xy.transpose();
  r.det_cxy = b.det_cxy;
  r.has_inverse = b.has_inverse;
  if (b.has_inverse) r.c_xy_inv = b.c_xy_inv.transpose();
  const int n = b.dim;
  if (r.order >= 3) {
    r.c_xxy = Tensor3(n);
    r.c_xyy = Tensor3(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          r.c_xxy(i, j, k) = b.c_xyy(k, i, j);
          r.c_xyy(i, j, k) = b.c_xxy(j, k, i);
        }
  }
  if (r.order >= 4) {
    r.c_xxyy = Tensor4(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int rr = 0; rr < n; ++rr)
          for (int s = 0; s < n; ++s) r.c_xxyy(i, j, rr, s) = b.c_xxyy(rr, s, i, j);
  }
  return r;
}

Vec newton_invert(const CostModel& model, const Vec& given, const Vec& rhs, bool solve_for_y,
                  const Vec& start) {
  // Solve c_x(given, y) = rhs  or  c_y(x, given) = rhs, damped Newton.
  Vec z = start;
  const double tol = 1e-11 * std::max(1.0, rhs.norm());
  double rnorm = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 50; ++it) {
    DerivativeBundle b;
    const Vec x = solve_for_y ? given : z;
    const Vec y = solve_for_y ? z : given;
    try {
      check_validity(model, x, y);
      bundle2(model, x, y, b);
    } catch (const DomainViolation&) {
      throw NoSolution("newton iterate left the cost validity set");
    }
    const Vec r = (solve_for_y ? b.c_x : b.c_y) - rhs;
    rnorm = r.norm();
    if (rnorm <= tol) return z;
    // Jacobian: d c_x / dy = c_xy; d c_y / dx = c_xy^T
    const Mat J = solve_for_y ? b.c_xy : Mat(b.c_xy.transpose());
    if (std::abs(J.determinant()) <= singular_tol(J))
      throw NoSolution("singular mixed hessian during inversion");
    const Vec dz = J.fullPivLu().solve(-r);
    double alpha = 1.0;
    bool accepted = false;
    while (alpha >= 1e-6) {
      const Vec zt = z + alpha * dz;
      try {
        const Vec xt = solve_for_y ? given : zt;
        const Vec yt = solve_for_y ? zt : given;
        check_validity(model, xt, yt);
        DerivativeBundle bt;
        bundle2(model, xt, yt, bt);
        const Vec rt = (solve_for_y ? bt.c_x : bt.c_y) - rhs;
        if (rt.norm() < rnorm) {
          z = zt;
          accepted = true;
          break;
        }
      } catch (const DomainViolation&) {
        // shrink
      }
      alpha *= 0.5;
    }
    if (!accepted) throw NoSolution("damped newton stalled (target outside range)");
  }
  throw NoSolution("newton did not converge in 50 iterations");
}

}  // namespace

void check_validity(const CostModel& model, const Vec& x, const Vec& y) {
  if (x.size() != model.dim || y.size() != model.dim)
    throw DomainViolation("point dimension does not match the cost model");
  if (!x.allFinite() || !y.allFinite()) throw DomainViolation("non-finite point");
  const CostModel& b = model;  // validity sets are symmetric under reflection
  switch (b.id) {
    case CostId::sqrt_minus: {
      const double r = (x - y).norm();
      if (r > 1.0 - b.sqrt_minus_margin)
        throw DomainViolation("sqrt_minus requires |x-y| <= 1 - margin");
      return;
    }
    case CostId::power: {
      const double r = (x - y).norm();
      if (b.m != 2.0 && r < b.sep_min)
        throw DomainViolation("power cost requires |x-y| >= sep_min");
      if (b.m == 2.0) return;
      if (r <= 0.0) throw DomainViolation("power cost undefined at x = y");
      return;
    }
    default:
      return;
  }
}

bool is_admissible(const CostModel& model, const Vec& x, const Vec& y) {
  try {
    check_validity(model, x, y);
    return true;
  } catch (const DomainViolation&) {
    return false;
  }
}

double evaluate(const CostModel& model, const Vec& x, const Vec& y) {
  if (model.reflected) return evaluate(base_of(model), y, x);
  check_validity(model, x, y);
  switch (model.id) {
    case CostId::quadratic:
      return x.dot(y);
    case CostId::dot_plus_fg:
      return x.dot(y) + model.f.eval(x) * model.g.eval(y);
    default:
      return phi_jet(model, (x - y).squaredNorm())[0];
  }
}

double singular_tol(const Mat& c_xy) {
  const int n = static_cast<int>(c_xy.rows());
  const double scale = std::max(1e-12, c_xy.norm() / std::sqrt(double(n)));
  return 1e-12 * std::pow(scale, n);
}

DerivativeBundle derivative_bundle(const CostModel& model, const Vec& x, const Vec& y,
                                   int order) {
  if (order < 2 || order > 4) throw Error("derivative_bundle: order must be in 2..4");
  if (model.reflected) return reflect_bundle(derivative_bundle(base_of(model), y, x, order));
  // derivative blowup at coincidence: flag as singular rather than invalid
  if (model.id == CostId::power && model.m < 2.0 && (x - y).norm() < 1e-12)
    throw SingularMixedHessian("power cost derivatives singular at x = y");
  check_validity(model, x, y);
  DerivativeBundle b;
  b.dim = model.dim;
  b.order = order;
  if (model.derivative_mode == DerivMode::analytic) {
    bundle2(model, x, y, b);
    if (order >= 3) bundle_high_analytic(model, x, y, b);
  } else {
    const double c = evaluate(model, x, y);
    bundle_fd(model, x, y, order, b);
    b.c = c;
  }
  b.det_cxy = b.c_xy.determinant();
  const double tol = singular_tol(b.c_xy);
  if (std::abs(b.det_cxy) <= tol)
    throw SingularMixedHessian("|det c_xy| below singular tolerance");
  b.has_inverse = true;
  b.c_xy_inv = b.c_xy.inverse();
  return b;
}

Vec solve_Y(const CostModel& model, const Vec& x, const Vec& p) {
  if (model.reflected) return solve_X(base_of(model), p, x);
  const int n = model.dim;
  if (p.size() != n || x.size() != n) throw DomainViolation("dimension mismatch in solve_Y");
  switch (model.id) {
    case CostId::quadratic:
      return p;
    case CostId::sqrt_plus: {
      const double pn2 = p.squaredNorm();
      if (pn2 >= 1.0 - 1e-12) throw NoSolution("sqrt_plus requires |p| < 1");
      return x + p / std::sqrt(1.0 - pn2);
    }
    case CostId::sqrt_minus:
      return x - p / std::sqrt(1.0 + p.squaredNorm());
    case CostId::power: {
      if (model.m == 1.0) throw NoSolution("power cost with m = 1 is not invertible");
      const double pn = p.norm();
      if (pn == 0.0) throw NoSolution("p = 0 outside the gradient range of the power cost");
      const double r = std::pow(pn, 1.0 / (model.m - 1.0));
      const Vec y = x - double(model.sign) * std::pow(pn, (2.0 - model.m) / (model.m - 1.0)) * p;
      if (model.m != 2.0 && r < model.sep_min)
        throw DomainViolation("solve_Y lands inside the excluded separation ball");
      return y;
    }
    case CostId::power_compound: {
      const double pn2 = p.squaredNorm();
      if (pn2 == 0.0) return x;
      const double pe = model.p;
      auto G = [&](double rho) { return pe * pe * rho * std::pow(1.0 + rho, pe - 2.0); };
      double hi = 1.0;
      while (G(hi) < pn2) {
        hi *= 2.0;
        if (hi > 1e16) throw NoSolution("p outside the gradient range of the compound cost");
      }
      double lo = 0.0;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (G(mid) < pn2 ? lo : hi) = mid;
        if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
      }
      const double rho = 0.5 * (lo + hi);
      const double dphi = -0.5 * pe * std::pow(1.0 + rho, pe / 2.0 - 1.0);
      return x - p / (2.0 * dphi);
    }
    case CostId::dot_plus_fg:
      return newton_invert(model, x, p, /*solve_for_y=*/true, /*start=*/p);
  }
  throw Error("solve_Y: unhandled cost id");
}

Vec solve_X(const CostModel& model, const Vec& q, const Vec& y) {
  if (model.reflected) return solve_Y(base_of(model), y, q);
  const int n = model.dim;
  if (q.size() != n || y.size() != n) throw DomainViolation("dimension mismatch in solve_X");
  switch (model.id) {
    case CostId::quadratic:
      return q;
    case CostId::sqrt_plus: {
      const double qn2 = q.squaredNorm();
      if (qn2 >= 1.0 - 1e-12) throw NoSolution("sqrt_plus requires |q| < 1");
      return y + q / std::sqrt(1.0 - qn2);
    }
    case CostId::sqrt_minus:
      return y - q / std::sqrt(1.0 + q.squaredNorm());
    case CostId::power: {
      if (model.m == 1.0) throw NoSolution("power cost with m = 1 is not invertible");
      const double qn = q.norm();
      if (qn == 0.0) throw NoSolution("q = 0 outside the gradient range of the power cost");
      const double r = std::pow(qn, 1.0 / (model.m - 1.0));
      const Vec x = y - double(model.sign) * std::pow(qn, (2.0 - model.m) / (model.m - 1.0)) * q;
      if (model.m != 2.0 && r < model.sep_min)
        throw DomainViolation("solve_X lands inside the excluded separation ball");
      return x;
    }
    case CostId::power_compound: {
      const double qn2 = q.squaredNorm();
      if (qn2 == 0.0) return y;
      // c_y = -c_x for radial costs, so x - y solves the same scalar equation
      const Vec d = solve_Y(model, Vec::Zero(n), q);
      return y + d;
    }
    case CostId::dot_plus_fg:
      return newton_invert(model, y, q, /*solve_for_y=*/false, /*start=*/q);
  }
  throw Error("solve_X: unhandled cost id");
}

Mat matrix_A(const CostModel& model, const Vec& x, const Vec& p) {
  const Vec y = solve_Y(model, x, p);
  DerivativeBundle b;
  Mat A;
  if (model.reflected) {
    const CostModel bm = base_of(model);
    check_validity(bm, y, x);
    bundle2(bm, y, x, b);
    A = b.c_yy;
  } else {
    check_validity(model, x, y);
    bundle2(model, x, y, b);
    A = b.c_xx;
  }
  return 0.5 * (A + A.transpose());
}

double scalar_B(const CostModel& model, const Vec& x, const Vec& p, double psi) {
  if (!(psi > 0.0)) throw Error("scalar_B: psi must be positive");
  const Vec y = solve_Y(model, x, p);
  const DerivativeBundle b = derivative_bundle(model, x, y, 2);
  return std::abs(b.det_cxy) * psi;
}

}  // namespace otma
