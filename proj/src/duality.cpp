#include "otma/duality.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

namespace otma {

void WeightedCloud::validate() const {
  if (points.empty() || weights.size() != static_cast<Eigen::Index>(points.size()))
    throw Error("weighted cloud: points/weights mismatch");
  if (weights.minCoeff() < 0.0) throw Error("weighted cloud: negative weight");
  if (!(weights.sum() > 0.0)) throw Error("weighted cloud: zero total mass");
}

Vec c_transform(const CostModel& model, const Vec& u, const WeightedCloud& X,
                const WeightedCloud& Y, TransformStats* stats) {
  const std::size_t n = X.size(), m = Y.size();
  if (u.size() != static_cast<Eigen::Index>(n)) throw Error("c_transform: u size mismatch");
  Vec v(m);
  for (std::size_t j = 0; j < m; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    long ties = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double val = evaluate(model, X.points[i], Y.points[j]) - u[i];
      if (val > best + kArgTol) {
        best = val;
        ties = 0;
      } else if (val > best) {
        best = val;  // lowest index already kept the argmax
        ++ties;
      } else if (val > best - kArgTol) {
        ++ties;
      }
    }
    if (stats != nullptr) stats->ties += ties;
    v[j] = best;
  }
  return v;
}

Vec c_convexify(const CostModel& model, const Vec& u, const WeightedCloud& X,
                const WeightedCloud& Y) {
  const Vec v = c_transform(model, u, X, Y);
  const std::size_t n = X.size(), m = Y.size();
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j)
      best = std::max(best, evaluate(model, X.points[i], Y.points[j]) - v[j]);
    out[i] = best;
  }
  return out;
}

CConvexity is_c_convex(const CostModel& model, const Vec& u, const WeightedCloud& X,
                       const WeightedCloud& Y) {
  const Vec env = c_convexify(model, u, X, Y);
  const double defect = (u - env).cwiseAbs().maxCoeff();
  return {defect <= 1e-10, defect};
}

std::vector<int> c_normal_map(const CostModel& model, const Vec& u, const WeightedCloud& X,
                              const WeightedCloud& Y, int x0) {
  const auto conv = is_c_convex(model, u, X, Y);
  if (!conv.is_c_convex)
    throw NotCConvex("c_normal_map requires a c-convex potential (defect " +
                     std::to_string(conv.defect) + ")");
  const Vec v = c_transform(model, u, X, Y);
  double best = -std::numeric_limits<double>::infinity();
  const std::size_t m = Y.size();
  std::vector<double> vals(m);
  for (std::size_t j = 0; j < m; ++j) {
    vals[j] = evaluate(model, X.points[x0], Y.points[j]) - v[j];
    best = std::max(best, vals[j]);
  }
  std::vector<int> out;
  for (std::size_t j = 0; j < m; ++j)
    if (vals[j] >= best - kArgTol) out.push_back(static_cast<int>(j));
  return out;
}

double ma_measure(const CostModel& model, const Vec& u, const WeightedCloud& X,
                  const WeightedCloud& Y, const Vec& g_weights,
                  const std::vector<int>& cell) {
  if (g_weights.size() != static_cast<Eigen::Index>(Y.size()))
    throw Error("ma_measure: g weight size mismatch");
  const std::size_t n = X.size(), m = Y.size();
  // owner of a target: lowest-index source whose support set contains it
  std::vector<int> owner(m, -1);
  for (std::size_t i = 0; i < n; ++i)
    for (int j : c_normal_map(model, u, X, Y, static_cast<int>(i)))
      if (owner[j] < 0) owner[j] = static_cast<int>(i);
  std::vector<char> in_cell(n, 0);
  for (int i : cell) {
    if (i < 0 || i >= static_cast<int>(n)) throw Error("ma_measure: cell index out of range");
    in_cell[i] = 1;
  }
  double mass = 0.0;
  for (std::size_t j = 0; j < m; ++j)
    if (owner[j] >= 0 && in_cell[owner[j]]) mass += g_weights[j];
  return mass;
}

int oracle_max_size(const DualOptions& opts) {
  if (opts.oracle_max) return *opts.oracle_max;
  if (const char* env = std::getenv("MTW_ORACLE_MAX")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 400;
}

namespace {

// Successive shortest paths on the dense bipartite transportation graph,
// minimizing sum pi * (-c). Potentials keep reduced costs nonnegative, so
// Dijkstra applies; the returned duals satisfy u(x)+v(y) >= c with equality
// on the support.
DualResult solve_exact(const Mat& cost, const Vec& a, const Vec& b) {
  const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  const Mat w = -cost;
  const double total = a.sum();
  const double tol_mass = 1e-14 * std::max(1.0, total);

  std::vector<double> pot(n + m, 0.0);
  for (int j = 0; j < m; ++j) {
    double mn = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) mn = std::min(mn, w(i, j));
    pot[n + j] = mn;
  }
  Mat flow = Mat::Zero(n, m);
  Vec rs = a, rd = b;

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n + m);
  std::vector<int> parent(n + m);
  std::vector<char> done(n + m);

  double remaining = total;
  const long max_aug = 50L * (n + m) + 100;
  long iterations = 0;
  while (remaining > tol_mass) {
    if (++iterations > max_aug)
      throw NonConvergence("successive shortest paths exceeded the augmentation budget");
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(parent.begin(), parent.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (int i = 0; i < n; ++i)
      if (rs[i] > tol_mass) dist[i] = 0.0;
    for (int it = 0; it < n + m; ++it) {
      int u = -1;
      double du = inf;
      for (int v = 0; v < n + m; ++v)
        if (!done[v] && dist[v] < du) {
          du = dist[v];
          u = v;
        }
      if (u < 0) break;
      done[u] = 1;
      if (u < n) {
        for (int j = 0; j < m; ++j) {
          const double rc = w(u, j) + pot[u] - pot[n + j];
          if (du + rc < dist[n + j] - 1e-15) {
            dist[n + j] = du + rc;
            parent[n + j] = u;
          }
        }
      } else {
        const int j = u - n;
        for (int i = 0; i < n; ++i) {
          if (flow(i, j) <= tol_mass) continue;
          const double rc = -w(i, j) + pot[n + j] - pot[i];
          if (du + rc < dist[i] - 1e-15) {
            dist[i] = du + rc;
            parent[i] = u;
          }
        }
      }
    }
    int t = -1;
    double dt = inf;
    for (int j = 0; j < m; ++j)
      if (rd[j] > tol_mass && dist[n + j] < dt) {
        dt = dist[n + j];
        t = n + j;
      }
    if (t < 0) throw NonConvergence("no augmenting path (unbalanced marginals?)");
    for (int v = 0; v < n + m; ++v) pot[v] += std::min(dist[v], dt);

    // bottleneck along the alternating path back to a free source
    double delta = rd[t - n];
    int v = t;
    while (parent[v] >= 0) {
      const int p = parent[v];
      if (v >= n && p < n) {
        // forward arc, uncapacitated
      } else if (v < n && p >= n) {
        delta = std::min(delta, flow(v, p - n));
      }
      v = p;
    }
    delta = std::min(delta, rs[v]);
    int vv = t;
    while (parent[vv] >= 0) {
      const int p = parent[vv];
      if (vv >= n && p < n)
        flow(p, vv - n) += delta;
      else
        flow(vv, p - n) -= delta;
      vv = p;
    }
    rs[vv] -= delta;
    rd[t - n] -= delta;
    remaining -= delta;
  }

  DualResult res;
  res.method = "exact_lp";
  res.iterations = static_cast<int>(iterations);
  res.plan.coupling = flow;
  res.plan.value = (flow.array() * cost.array()).sum();
  res.potentials.u = Vec(n);
  res.potentials.v = Vec(m);
  for (int i = 0; i < n; ++i) res.potentials.u[i] = pot[i];
  for (int j = 0; j < m; ++j) res.potentials.v[j] = -pot[n + j];
  return res;
}

DualResult solve_entropic(const Mat& cost, const Vec& a, const Vec& b,
                          const DualOptions& opts) {
  const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  const double eps = opts.epsilon;
  if (!(eps > 0.0)) throw Error("entropic method requires epsilon > 0");
  Vec u = Vec::Zero(n), v = Vec::Zero(m);
  Vec loga(n), logb(m);
  for (int i = 0; i < n; ++i) loga[i] = a[i] > 0 ? std::log(a[i]) : -1e300;
  for (int j = 0; j < m; ++j) logb[j] = b[j] > 0 ? std::log(b[j]) : -1e300;

  auto lse_row = [&](int i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) mx = std::max(mx, logb[j] + (cost(i, j) - v[j]) / eps);
    double s = 0.0;
    for (int j = 0; j < m; ++j) s += std::exp(logb[j] + (cost(i, j) - v[j]) / eps - mx);
    return eps * (mx + std::log(s));
  };
  auto lse_col = [&](int j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) mx = std::max(mx, loga[i] + (cost(i, j) - u[i]) / eps);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(loga[i] + (cost(i, j) - u[i]) / eps - mx);
    return eps * (mx + std::log(s));
  };

  int it = 0;
  double marg_err = std::numeric_limits<double>::infinity();
  for (; it < opts.max_iter; ++it) {
    for (int i = 0; i < n; ++i) u[i] = lse_row(i);
    for (int j = 0; j < m; ++j) v[j] = lse_col(j);
    if (it % 10 == 9 || it == opts.max_iter - 1) {
      // row marginal error of the implied plan
      marg_err = 0.0;
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < m; ++j)
          s += a[i] * b[j] * std::exp((cost(i, j) - u[i] - v[j]) / eps);
        marg_err = std::max(marg_err, std::abs(s - a[i]));
      }
      if (marg_err <= opts.marginal_tol * std::max(1.0, a.sum())) break;
    }
  }
  if (marg_err > 1e-6 * std::max(1.0, a.sum()))
    throw NonConvergence("entropic scaling did not reach the marginal tolerance");

  Mat pi(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      pi(i, j) = a[i] * b[j] * std::exp((cost(i, j) - u[i] - v[j]) / eps);

  // round to exact marginals: scale rows/cols down, spread the residual
  Vec r1 = pi.rowwise().sum();
  for (int i = 0; i < n; ++i)
    if (r1[i] > a[i] && r1[i] > 0) pi.row(i) *= a[i] / r1[i];
  Vec c1 = pi.colwise().sum().transpose();
  for (int j = 0; j < m; ++j)
    if (c1[j] > b[j] && c1[j] > 0) pi.col(j) *= b[j] / c1[j];
  Vec ea = a - pi.rowwise().sum();
  Vec eb = b - Vec(pi.colwise().sum().transpose());
  const double es = ea.sum();
  if (es > 1e-300) pi += (ea / es) * eb.transpose();

  // certified bound: shift u into feasibility and compare dual vs primal value
  double viol = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) viol = std::max(viol, cost(i, j) - u[i] - v[j]);
  const Vec u_feas = u.array() + viol;
  const double dual_value = a.dot(u_feas) + b.dot(v);
  const double primal_value = (pi.array() * cost.array()).sum();

  DualResult res;
  res.method = "entropic";
  res.iterations = it + 1;
  res.plan.coupling = pi;
  res.plan.value = primal_value;
  res.potentials.u = u_feas;
  res.potentials.v = v;
  res.suboptimality_bound = dual_value - primal_value;
  return res;
}

}  // namespace

DualResult solve_dual_discrete(const CostModel& model, const WeightedCloud& source,
                               const WeightedCloud& target, const DualOptions& opts) {
  source.validate();
  target.validate();
  const int limit = oracle_max_size(opts);
  if (opts.method == DualMethod::exact_lp &&
      (static_cast<int>(source.size()) > limit || static_cast<int>(target.size()) > limit))
    throw OracleTooLarge("cloud size exceeds oracle_max = " + std::to_string(limit));
  const double mass = source.total_mass();
  if (std::abs(mass - target.total_mass()) > 1e-9 * std::max(1.0, mass))
    throw MassImbalance("source and target masses differ beyond tolerance");

  const int n = static_cast<int>(source.size()), m = static_cast<int>(target.size());
  Mat cost(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      cost(i, j) = evaluate(model, source.points[i], target.points[j]);

  Vec b = target.weights * (mass / target.total_mass());  // exact rebalance within tolerance

  DualResult res = opts.method == DualMethod::exact_lp
                       ? solve_exact(cost, source.weights, b)
                       : solve_entropic(cost, source.weights, b, opts);

  // canonical conjugate pair; keeps feasibility and support equalities
  Vec& u = res.potentials.u;
  Vec& v = res.potentials.v;
  for (int j = 0; j < m; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) best = std::max(best, cost(i, j) - u[i]);
    v[j] = best;
  }
  for (int i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) best = std::max(best, cost(i, j) - v[j]);
    u[i] = best;
  }
  return res;
}

}  // namespace otma
