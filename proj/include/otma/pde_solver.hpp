#pragma once

#include <string>
#include <vector>

#include "otma/cost_model.hpp"
#include "otma/geometry.hpp"

namespace otma {

/// Density field evaluable anywhere (constants and simple smooth families).
struct Density {
  enum class Kind { constant, affine, poly_radial };
  Kind kind = Kind::constant;
  double value = 1.0;  // constant, or affine offset
  Vec grad;            // affine slope
  RadialPoly poly;

  double operator()(const Vec& x) const {
    switch (kind) {
      case Kind::constant: return value;
      case Kind::affine: return value + grad.dot(x);
      case Kind::poly_radial: return poly.eval(x);
    }
    return value;
  }
};

struct ProblemSpec {
  CostModel model;
  DomainSpec omega, omega_star;
  Density f, g;  // positive on their domains; psi = f / g(Y(., Du))

  void validate() const;  // positivity and mass balance
  double mass() const;
};

/// Per-node first/second derivative stencils in Cartesian components
/// (centered second order inside, one-sided second order on the boundary;
/// polar grids convert through the chain rule).
struct NodeStencil {
  std::vector<int> nodes;
  std::vector<Vec> gw;  // gradient weight per entry
  std::vector<Mat> hw;  // hessian weight per entry
};

struct Discretization {
  std::vector<NodeStencil> stencils;
  std::vector<char> boundary;           // flag per node
  std::vector<int> boundary_ordinal;    // node -> index into DomainSpec boundary arrays
};

Discretization build_discretization(const DomainSpec& domain);

struct PotentialField {
  Vec u;
  std::vector<Vec> Du;
  std::vector<Mat> D2u;
  std::vector<Mat> w;  // D2u - A(., Du)
  std::vector<Vec> T;  // Y(., Du)
  Vec min_eig_w;
  bool elliptic = false;
  double h = 0.0;
};

/// Populates the derived fields of u on the grid. Throws DomainViolation /
/// NoSolution when some node's gradient is inadmissible for the cost.
PotentialField derive_field(const ProblemSpec& problem, const Discretization& disc,
                            const Vec& u);

/// Moving target description for the fixed-domain continuation: the defining
/// function interpolates from the seed image to the true target.
struct TargetShape {
  DomainKind kind = DomainKind::disk;
  Vec center;
  Vec radii;              // disk: (R, R); ellipse: semi-axes
  double lo = 0, hi = 1;  // interval

  double phi(const Vec& y) const;
  Vec grad_phi(const Vec& y) const;
  static TargetShape of_domain(const DomainSpec& d);
  static TargetShape lerp(const TargetShape& a, const TargetShape& b, double t);
};

struct NewtonOpts {
  int max_iter = 30;
  double tol = 1e-10;
  double min_alpha = 1e-6;
};

struct ContinuationState {
  double t = 0.0;
  double sigma = 1.0;
  Vec f_offset;  // interior forcing that makes the seed exact at t = 0
  TargetShape target_seed, target_final;
  double dt = 0.2, dt_min = 1e-4, shrink = 0.5, grow = 1.5;
  NewtonOpts newton;

  TargetShape target_at(double tt) const {
    return TargetShape::lerp(target_seed, target_final, tt);
  }
};

/// State with the true target at both ends and no interior forcing; the
/// residual of the final problem is residual(pb, disc, field, make_state(pb, 1, 0)).
ContinuationState make_state(const ProblemSpec& problem, double t, double sigma);

struct Schedule {
  double sigma0 = 1.0;
  double sigma_min = 1e-3;
  double sigma_factor = 0.1;
  double dt0 = 0.2;
  double dt_min = 1e-4;
  NewtonOpts newton;
  enum class SeedMode { automatic, quadratic, sup_c_functions } seed_mode = SeedMode::automatic;
};

struct SeedResult {
  PotentialField field;
  double kappa = 0.0;
  std::string mode;  // "quadratic" or "sup_c_functions"
};

/// Strictly elliptic admissible seed: quadratic with scanned curvature, or a
/// mollified supremum of cost sections over target samples as a fallback.
SeedResult initial_guess(const ProblemSpec& problem, const Discretization& disc,
                         Schedule::SeedMode mode = Schedule::SeedMode::automatic);

/// Node-wise residual: interior det(w) - e^{sigma u + (1-t) f} B(., Du),
/// boundary rows carry the oblique condition phi*_t(Y(., Du)).
Vec residual(const ProblemSpec& problem, const Discretization& disc,
             const PotentialField& field, const ContinuationState& state);

struct NewtonInfo {
  double alpha = 1.0;
  double res_before = 0.0, res_after = 0.0;
  double min_eig_w = 0.0;
};

/// One damped Newton step for the current continuation state.
PotentialField newton_step(const ProblemSpec& problem, const Discretization& disc,
                           const PotentialField& field, const ContinuationState& state,
                           NewtonInfo* info = nullptr);

struct TraceEntry {
  std::string phase;  // "seed", "t", "sigma"
  double t = 0.0, sigma = 0.0, dt = 0.0;
  int newton_iters = 0;
  double res_initial = 0.0, res_final = 0.0;
  double min_eig_w = 0.0;
  double min_beta_gamma = 0.0;
  bool accepted = false;
};

struct SigmaSnapshot {
  double sigma = 0.0;
  double sup_sigma_u = 0.0;  // max |sigma * u| before normalization
  Vec u_normalized;          // mean-zero potential at this sigma
};

struct SolveResult {
  PotentialField field;  // mean-zero
  std::vector<TraceEntry> trace;
  std::vector<SigmaSnapshot> sigma_history;
  double kappa_seed = 0.0;
  std::string seed_mode;
  std::string continuation_path = "fixed domain, moving target defining function";
  bool converged = false;
  std::string stall_reason;
};

/// Full continuation run: t from 0 to 1 with adaptive steps at sigma0, then
/// sigma down to sigma_min geometrically. The potential is returned mean-zero.
SolveResult continuation_solve(const ProblemSpec& problem, const Schedule& schedule = {});

struct MapResult {
  std::vector<Vec> T;
  std::vector<char> in_target;  // signed distance to the target <= 2h
};

MapResult map_T(const ProblemSpec& problem, const Discretization& disc,
                const PotentialField& field);

}  // namespace otma
