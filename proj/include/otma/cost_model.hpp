#pragma once

#include <optional>
#include <string>

#include "otma/types.hpp"

namespace otma {

enum class CostId { quadratic, sqrt_plus, sqrt_minus, dot_plus_fg, power, power_compound };
enum class DerivMode { analytic, finite_difference };

std::string to_string(CostId id);
CostId cost_id_from_string(const std::string& s);

/// Polynomial in the squared radius about a center: sum_k coeffs[k] * |x-center|^(2k).
/// Convex whenever coeffs[k] >= 0 for k >= 1.
struct RadialPoly {
  Vec center;
  Vec coeffs;

  double eval(const Vec& x) const;
  Vec grad(const Vec& x) const;
  Mat hess(const Vec& x) const;
  bool convex() const;
};

struct CostModel {
  CostId id = CostId::quadratic;
  int dim = 2;

  // power cost parameters: sign * |x-y|^m / m  (log|x-y| when m == 0)
  double m = 2.0;
  int sign = +1;

  // compound cost exponent: -(1 + |x-y|^2)^(p/2), 1 <= p <= 2
  double p = 1.5;

  // dot_plus_fg: x.y + f(x) g(y)
  RadialPoly f, g;

  DerivMode derivative_mode = DerivMode::analytic;
  double fd_step = 1e-4;

  // validity controls
  double sep_min = 1e-6;           // minimum |x-y| for power costs with m < 2
  double sqrt_minus_margin = 1e-6; // |x-y| <= 1 - margin for sqrt_minus

  bool reflected = false;  // evaluate the adjoint cost c*(x,y) = c(y,x)

  static CostModel Quadratic(int dim);
  static CostModel SqrtPlus(int dim);
  static CostModel SqrtMinus(int dim);
  static CostModel Power(int dim, double m, int sign);
  static CostModel PowerCompound(int dim, double p);
  static CostModel DotPlusFG(int dim, RadialPoly f, RadialPoly g);
};

/// Adjoint model: evaluates c(y, x). Involution.
CostModel reflect(const CostModel& model);

/// Derivatives of c at one (x, y), populated through `order`.
/// Mixed-index tensors follow the convention: first index group differentiates
/// in x, the group after the comma in y.
struct DerivativeBundle {
  int dim = 0;
  int order = 0;
  double c = 0.0;
  Vec c_x, c_y;
  Mat c_xx, c_yy, c_xy;
  double det_cxy = 0.0;
  bool has_inverse = false;
  Mat c_xy_inv;     // [c^{i,j}]: plain matrix inverse of c_xy
  Tensor3 c_xxy;    // c_{ij,k}
  Tensor3 c_xyy;    // c_{i,kl}
  Tensor4 c_xxyy;   // c_{ij,rs}
};

/// Throws DomainViolation if (x,y) is outside the model's validity set.
void check_validity(const CostModel& model, const Vec& x, const Vec& y);
bool is_admissible(const CostModel& model, const Vec& x, const Vec& y);

double evaluate(const CostModel& model, const Vec& x, const Vec& y);

/// Derivative bundle through `order` (2..4). In analytic mode all entries are
/// closed-form; in finite_difference mode entries of each order are central
/// differences of the next-lower analytic order with step model.fd_step.
DerivativeBundle derivative_bundle(const CostModel& model, const Vec& x, const Vec& y,
                                   int order = 2);

/// Scale-aware threshold below which |det c_xy| is treated as singular.
double singular_tol(const Mat& c_xy);

/// Unique y with c_x(x, y) = p. Analytic inverse where the model provides one,
/// damped Newton otherwise. Throws NoSolution when p is outside the range.
Vec solve_Y(const CostModel& model, const Vec& x, const Vec& p);

/// Unique x with c_y(x, y) = q.
Vec solve_X(const CostModel& model, const Vec& q, const Vec& y);

/// A(x,p) = c_xx(x, Y(x,p)), exactly symmetrized.
Mat matrix_A(const CostModel& model, const Vec& x, const Vec& p);

/// B(x,p) = |det c_xy(x, Y(x,p))| * psi, psi > 0.
double scalar_B(const CostModel& model, const Vec& x, const Vec& p, double psi);

}  // namespace otma
