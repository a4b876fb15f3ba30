#pragma once

#include <optional>
#include <string>
#include <vector>

#include "otma/cost_model.hpp"

namespace otma {

enum class DomainKind { interval, disk, ellipse, ball, point_cloud };

std::string to_string(DomainKind k);
DomainKind domain_kind_from_string(const std::string& s);

/// Shape parameters as read from a problem file.
struct DomainParams {
  DomainKind kind = DomainKind::disk;
  Vec center;          // disk / ellipse / ball
  double radius = 1.0; // disk / ball
  Vec radii;           // ellipse semi-axes
  double lo = 0.0, hi = 1.0;  // interval
  double def_a = 1.0, def_b = 0.0;  // phi = -a d + b d^2
  // point clouds: explicit nodes (boundary assumed ordered along the curve)
  std::vector<Vec> cloud_interior, cloud_boundary;
  std::vector<Vec> cloud_normals;  // optional; finite differences otherwise
};

/// Sampled bounded domain. Nodes are stored in natural structured order
/// (interval: left to right; disk/ellipse: ring-major with the boundary ring
/// last); boundary_idx names the boundary nodes.
struct DomainSpec {
  DomainParams params;
  int dim = 0;
  double h = 0.0;  // nominal node spacing

  std::vector<Vec> nodes;
  std::vector<double> weights;  // quadrature weight per node (volume cells)
  std::vector<std::size_t> boundary_idx;
  std::vector<Vec> boundary_normals;    // unit outward, aligned with boundary_idx
  std::vector<Mat> boundary_curvature;  // D gamma, aligned with boundary_idx

  // structured-grid dims (interval: n x 1; disk/ellipse: nr x ntheta)
  int grid_n1 = 0, grid_n2 = 0;

  std::size_t n_boundary() const { return boundary_idx.size(); }
  const Vec& boundary_node(std::size_t b) const { return nodes[boundary_idx[b]]; }
  bool is_boundary(std::size_t i) const;

  /// Defining function phi = -a d + b d^2 with d the inward boundary distance
  /// (first-order accurate for ellipses, exact otherwise). phi < 0 inside.
  double phi(const Vec& x) const;
  Vec grad_phi(const Vec& x) const;
  /// Signed distance to the boundary, negative inside.
  double signed_distance(const Vec& x) const;
  Vec centroid() const;
  double total_weight() const;
};

/// Builds the sampled domain at resolution `resolution` (nodes per axis).
DomainSpec build_domain(const DomainParams& params, int resolution);

/// Image cloud {c_y(x, y) : x over domain nodes}. boundary_only restricts to
/// the boundary ring.
std::vector<Vec> c_image(const CostModel& model, const DomainSpec& domain, const Vec& y,
                         bool boundary_only = false);

enum class ConvexityVerdict { uniformly_c_convex, c_convex_degenerate, fails };
std::string to_string(ConvexityVerdict v);

struct ConvexityReport {
  double delta0_estimate = 0.0;
  ConvexityVerdict verdict = ConvexityVerdict::fails;
  Vec witness_x, witness_y, witness_tau;
  long samples_used = 0;
  bool vacuous = false;  // dimension 1: no tangent directions
  std::string note;
};

inline constexpr double kConvexityTol = 1e-6;

/// Worst case over boundary points, sampled targets and unit tangents of the
/// boundary form D_i gamma_j - c^{l,k} c_{ij,l} gamma_k contracted tau tau.
ConvexityReport check_uniform_c_convexity(const CostModel& model, const DomainSpec& omega,
                                          const DomainSpec& omega_star,
                                          int max_target_samples = 64);

/// Same check for the target domain under the adjoint cost.
ConvexityReport check_uniform_cstar_convexity(const CostModel& model, const DomainSpec& omega,
                                              const DomainSpec& omega_star,
                                              int max_target_samples = 64);

/// Monotone-chain hull of a planar cloud (CCW, no duplicated endpoint).
std::vector<Vec> convex_hull_2d(std::vector<Vec> points);

/// Max distance from a cloud point to the hull boundary polygon; zero for
/// points lying on the hull, positive for re-entrant ones.
double hull_defect_2d(const std::vector<Vec>& points);

}  // namespace otma
