#pragma once

#include <optional>
#include <string>
#include <vector>

#include "otma/cost_model.hpp"

namespace otma {

struct WeightedCloud {
  std::vector<Vec> points;
  Vec weights;  // nonnegative, positive total

  std::size_t size() const { return points.size(); }
  double total_mass() const { return weights.sum(); }
  void validate() const;
};

struct DiscretePotentialPair {
  Vec u;  // on the source cloud
  Vec v;  // on the target cloud
};

struct TransportPlan {
  Mat coupling;        // pi[i][j] >= 0
  double value = 0.0;  // sum pi * c
};

struct TransformStats {
  long ties = 0;  // argmax ties broken by lowest index
};

inline constexpr double kArgTol = 1e-10;

/// Discrete c-transform: v(y) = max_x { c(x,y) - u(x) }, exact sup over the
/// source cloud, ties broken by lowest index.
Vec c_transform(const CostModel& model, const Vec& u, const WeightedCloud& X,
                const WeightedCloud& Y, TransformStats* stats = nullptr);

/// Double transform (u*)* through the target cloud: the c-convex envelope of
/// u on the cloud. Pointwise <= u, idempotent.
Vec c_convexify(const CostModel& model, const Vec& u, const WeightedCloud& X,
                const WeightedCloud& Y);

struct CConvexity {
  bool is_c_convex = false;
  double defect = 0.0;  // ||u - c_convexify(u)||_inf
};

CConvexity is_c_convex(const CostModel& model, const Vec& u, const WeightedCloud& X,
                       const WeightedCloud& Y);

/// Support set of u at x0: all target indices attaining
/// max_y { c(x0,y) - v(y) } within kArgTol, v the c-transform of u.
std::vector<int> c_normal_map(const CostModel& model, const Vec& u, const WeightedCloud& X,
                              const WeightedCloud& Y, int x0);

/// Mass of g carried by the normal image of `cell`. Targets claimed by
/// several sources are assigned to the lowest-index owner so that cells
/// partition the reachable targets.
double ma_measure(const CostModel& model, const Vec& u, const WeightedCloud& X,
                  const WeightedCloud& Y, const Vec& g_weights,
                  const std::vector<int>& cell);

enum class DualMethod { exact_lp, entropic };

struct DualOptions {
  DualMethod method = DualMethod::exact_lp;
  double epsilon = 1e-2;   // entropic regularization
  int max_iter = 20000;    // entropic
  double marginal_tol = 1e-9;
  std::optional<int> oracle_max;  // default 400, env MTW_ORACLE_MAX override
};

struct DualResult {
  TransportPlan plan;
  DiscretePotentialPair potentials;
  std::string method;
  double suboptimality_bound = 0.0;  // certified dual-primal gap (entropic)
  int iterations = 0;
};

/// Exact maximizing plan and complementary-slackness duals (exact_lp), or an
/// epsilon-regularized pair with a certified suboptimality bound (entropic).
/// Duals are stored in the feasibility orientation u(x) + v(y) >= c(x,y).
DualResult solve_dual_discrete(const CostModel& model, const WeightedCloud& source,
                               const WeightedCloud& target, const DualOptions& opts = {});

int oracle_max_size(const DualOptions& opts);

}  // namespace otma
