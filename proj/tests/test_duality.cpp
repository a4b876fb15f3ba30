#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "otma/duality.hpp"

using namespace otma;

namespace {

Vec v1(double a) {
  Vec v(1);
  v << a;
  return v;
}

WeightedCloud cloud1d(std::initializer_list<double> xs, std::initializer_list<double> ws) {
  WeightedCloud c;
  for (double x : xs) c.points.push_back(v1(x));
  c.weights = Vec(ws.size());
  int k = 0;
  for (double w : ws) c.weights[k++] = w;
  return c;
}

// Exhaustive vertex enumeration of the transportation polytope: every vertex
// is the flow of a spanning tree of the bipartite graph. Independent of the
// production solver.
double brute_force_best_value(const Mat& cost, const Vec& a, const Vec& b) {
  const int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
  const int V = n + m, E = n * m, need = V - 1;
  std::vector<int> edges(E);
  for (int e = 0; e < E; ++e) edges[e] = e;
  double best = -std::numeric_limits<double>::infinity();

  std::vector<int> chosen;
  std::function<void(int)> rec = [&](int start) {
    if (static_cast<int>(chosen.size()) == need) {
      // union-find acyclicity + connectivity
      std::vector<int> parent(V);
      for (int v = 0; v < V; ++v) parent[v] = v;
      std::function<int(int)> find = [&](int v) {
        while (parent[v] != v) v = parent[v] = parent[parent[v]];
        return v;
      };
      for (int e : chosen) {
        const int i = e / m, j = n + e % m;
        const int ri = find(i), rj = find(j);
        if (ri == rj) return;
        parent[ri] = rj;
      }
      // solve tree flows by leaf stripping
      Vec supply(V);
      supply.head(n) = a;
      supply.tail(m) = -b;
      std::vector<std::vector<std::pair<int, int>>> adj(V);  // (other, edge)
      for (int e : chosen) {
        const int i = e / m, j = n + e % m;
        adj[i].push_back({j, e});
        adj[j].push_back({i, e});
      }
      std::vector<int> deg(V);
      for (int v = 0; v < V; ++v) deg[v] = static_cast<int>(adj[v].size());
      std::vector<char> removed_edge(E, 0), removed_node(V, 0);
      std::vector<double> flow(E, 0.0);
      for (int pass = 0; pass < V; ++pass) {
        int leaf = -1;
        for (int v = 0; v < V; ++v)
          if (!removed_node[v] && deg[v] == 1) {
            leaf = v;
            break;
          }
        if (leaf < 0) break;
        int e = -1, other = -1;
        for (auto [o, ee] : adj[leaf])
          if (!removed_edge[ee]) {
            e = ee;
            other = o;
            break;
          }
        const int i = e / m;
        const double f = (leaf == i) ? supply[leaf] : -supply[leaf];
        flow[e] = f;
        supply[other] += supply[leaf];
        removed_node[leaf] = 1;
        removed_edge[e] = 1;
        --deg[leaf];
        --deg[other];
      }
      double value = 0.0;
      for (int e : chosen) {
        if (flow[e] < -1e-12) return;  // infeasible vertex
        value += flow[e] * cost(e / m, e % m);
      }
      best = std::max(best, value);
      return;
    }
    for (int e = start; e < E; ++e) {
      chosen.push_back(e);
      rec(e + 1);
      chosen.pop_back();
    }
  };
  rec(0);
  return best;
}

}  // namespace

TEST_CASE("c_transform: pinned examples") {
  const auto m = CostModel::Quadratic(1);
  auto X = cloud1d({0, 1}, {0.5, 0.5});
  auto Y = cloud1d({2}, {1});
  Vec u = Vec::Zero(2);
  const Vec v = c_transform(m, u, X, Y);
  CHECK(v[0] == doctest::Approx(2.0));

  // u built from a c-function: transform recovers the offset
  auto Y2 = cloud1d({0.3, 0.9}, {1, 1});
  Vec uc(2);
  const double a = 0.7;
  for (int i = 0; i < 2; ++i) uc[i] = evaluate(m, X.points[i], Y2.points[1]) + a;
  const Vec v2 = c_transform(m, uc, X, Y2);
  CHECK(v2[1] == doctest::Approx(-a));
}

TEST_CASE("c_transform matches a brute-force double loop") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> ur(-1, 1);
  const auto m = CostModel::SqrtPlus(1);
  WeightedCloud X, Y;
  for (int i = 0; i < 5; ++i) X.points.push_back(v1(ur(rng)));
  for (int j = 0; j < 5; ++j) Y.points.push_back(v1(2 + ur(rng)));
  X.weights = Vec::Ones(5);
  Y.weights = Vec::Ones(5);
  Vec u(5);
  for (int i = 0; i < 5; ++i) u[i] = ur(rng);
  const Vec v = c_transform(m, u, X, Y);
  for (int j = 0; j < 5; ++j) {
    double best = -1e300;
    for (int i = 0; i < 5; ++i)
      best = std::max(best, evaluate(m, X.points[i], Y.points[j]) - u[i]);
    CHECK(v[j] == doctest::Approx(best).epsilon(1e-14));
  }
}

TEST_CASE("c_convexify: envelope, idempotence, dip repair") {
  const auto m = CostModel::Quadratic(1);
  WeightedCloud X, Y;
  for (int i = 0; i <= 10; ++i) X.points.push_back(v1(i / 10.0));
  for (int j = 0; j <= 10; ++j) Y.points.push_back(v1(j / 10.0));
  X.weights = Vec::Ones(11);
  Y.weights = Vec::Ones(11);
  Vec u(11);
  for (int i = 0; i <= 10; ++i) u[i] = 0.5 * X.points[i][0] * X.points[i][0];

  SUBCASE("a c-convex u is a fixed point") {
    const Vec env = c_convexify(m, u, X, Y);
    CHECK((u - env).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(is_c_convex(m, u, X, Y).is_c_convex);
  }
  SUBCASE("lifting one node is repaired; lowering breaks convexity") {
    Vec lifted = u;
    lifted[5] += 1.0;
    const Vec env = c_convexify(m, lifted, X, Y);
    for (int i = 0; i <= 10; ++i) CHECK(env[i] <= lifted[i] + 1e-14);
    // the cloud envelope restores the chord through the neighbours
    CHECK(env[5] == doctest::Approx(0.5 * (u[4] + u[6])).epsilon(1e-10));
    const Vec env2 = c_convexify(m, env, X, Y);
    CHECK((env - env2).cwiseAbs().maxCoeff() <= 1e-12);

    Vec dipped = u;
    dipped[5] -= 0.3;
    const auto conv = is_c_convex(m, dipped, X, Y);
    CHECK_FALSE(conv.is_c_convex);
    CHECK(conv.defect > 0.01);
  }
}

TEST_CASE("property: order reversal of the transform") {
  const auto m = CostModel::SqrtPlus(1);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ur(-1, 1);
  WeightedCloud X, Y;
  for (int i = 0; i < 8; ++i) X.points.push_back(v1(ur(rng)));
  for (int j = 0; j < 8; ++j) Y.points.push_back(v1(ur(rng)));
  X.weights = Vec::Ones(8);
  Y.weights = Vec::Ones(8);
  Vec u1(8), u2(8);
  for (int i = 0; i < 8; ++i) {
    u1[i] = ur(rng);
    u2[i] = u1[i] + std::abs(ur(rng));  // u2 >= u1
  }
  const Vec v1t = c_transform(m, u1, X, Y), v2t = c_transform(m, u2, X, Y);
  for (int j = 0; j < 8; ++j) CHECK(v1t[j] >= v2t[j]);
}

TEST_CASE("c_normal_map: pinned examples") {
  const auto m = CostModel::Quadratic(1);
  WeightedCloud X, Y;
  for (int i = 0; i <= 20; ++i) X.points.push_back(v1(i / 20.0));
  for (int j = 0; j <= 20; ++j) Y.points.push_back(v1(j / 20.0));
  X.weights = Vec::Ones(21);
  Y.weights = Vec::Ones(21);
  Vec u(21);
  for (int i = 0; i <= 20; ++i) u[i] = 0.5 * X.points[i][0] * X.points[i][0];

  SUBCASE("smooth point: singleton at the gradient") {
    const auto img = c_normal_map(m, u, X, Y, 10);  // x = 0.5, Du = 0.5
    REQUIRE(img.size() == 1);
    CHECK(Y.points[img[0]][0] == doctest::Approx(0.5));
  }
  SUBCASE("kink: both generators returned") {
    // target cloud holds the two generators plus points outside their span
    // (any y between the generators would support the kink as well)
    WeightedCloud Yk;
    const double y1 = 0.2, y2 = 0.8;
    for (double y : {0.05, y1, y2, 0.95}) Yk.points.push_back(v1(y));
    Yk.weights = Vec::Ones(4);
    Vec kinked(21);
    for (int i = 0; i <= 20; ++i) {
      const double x = X.points[i][0];
      kinked[i] = std::max(x * y1, x * y2 - 0.3);  // kink where x*0.6 = 0.3
    }
    const auto img = c_normal_map(m, kinked, X, Yk, 10);  // x = 0.5 is the kink
    REQUIRE(img.size() == 2);
    CHECK(Yk.points[img[0]][0] == doctest::Approx(y1));
    CHECK(Yk.points[img[1]][0] == doctest::Approx(y2));
  }
  SUBCASE("non-c-convex input throws") {
    Vec bad = u;
    bad[10] -= 0.5;
    CHECK_THROWS_AS(c_normal_map(m, bad, X, Y, 5), NotCConvex);
  }
}

TEST_CASE("ma_measure: pinned examples") {
  const auto m = CostModel::Quadratic(1);
  WeightedCloud X, Y;
  for (int i = 0; i <= 8; ++i) X.points.push_back(v1(i / 8.0));
  for (int j = 0; j <= 8; ++j) Y.points.push_back(v1(j / 8.0));
  X.weights = Vec::Ones(9);
  Y.weights = Vec::Ones(9);
  Vec u(9), g = Vec::Ones(9);
  for (int i = 0; i <= 8; ++i) u[i] = 0.5 * X.points[i][0] * X.points[i][0];

  std::vector<int> all(9);
  for (int i = 0; i < 9; ++i) all[i] = i;
  CHECK(ma_measure(m, u, X, Y, g, all) == doctest::Approx(9.0));
  CHECK(ma_measure(m, u, X, Y, g, {}) == 0.0);
  CHECK(ma_measure(m, u, X, Y, g, {4}) == doctest::Approx(1.0));
  // cells partition the reachable mass
  double sum = 0.0;
  for (int i = 0; i < 9; ++i) sum += ma_measure(m, u, X, Y, g, {i});
  CHECK(sum == doctest::Approx(ma_measure(m, u, X, Y, g, all)));
}

TEST_CASE("solve_dual_discrete: pinned examples") {
  const auto m = CostModel::Quadratic(1);
  SUBCASE("single pair") {
    auto X = cloud1d({0.5}, {2.0});
    auto Y = cloud1d({1.5}, {2.0});
    const auto res = solve_dual_discrete(m, X, Y);
    CHECK(res.plan.coupling(0, 0) == doctest::Approx(2.0));
    CHECK(res.plan.value == doctest::Approx(2.0 * 0.75));
  }
  SUBCASE("two points: maximizing plan is the monotone pairing") {
    auto X = cloud1d({0, 1}, {0.5, 0.5});
    auto Y = cloud1d({0, 1}, {0.5, 0.5});
    const auto res = solve_dual_discrete(m, X, Y);
    CHECK(res.plan.value == doctest::Approx(0.5));
    CHECK(res.plan.coupling(0, 0) == doctest::Approx(0.5));
    CHECK(res.plan.coupling(1, 1) == doctest::Approx(0.5));
  }
  SUBCASE("mass imbalance is rejected") {
    auto X = cloud1d({0, 1}, {0.5, 0.5});
    auto Y = cloud1d({0, 1}, {0.5, 0.6});
    CHECK_THROWS_AS(solve_dual_discrete(m, X, Y), MassImbalance);
  }
  SUBCASE("oracle size cap") {
    DualOptions opts;
    opts.oracle_max = 3;
    auto X = cloud1d({0, 0.25, 0.5, 0.75}, {1, 1, 1, 1});
    auto Y = cloud1d({0, 0.25, 0.5, 0.75}, {1, 1, 1, 1});
    CHECK_THROWS_AS(solve_dual_discrete(m, X, Y, opts), OracleTooLarge);
  }
}

TEST_CASE("exact LP: feasibility, slackness, strong duality on random instances") {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> ur(0.1, 1.0), up(-1, 1);
  const auto m = CostModel::SqrtPlus(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 5, k = 2 + (trial * 7) % 5;
    WeightedCloud X, Y;
    Vec a(n), b(k);
    for (int i = 0; i < n; ++i) {
      X.points.push_back(v1(up(rng)));
      a[i] = ur(rng);
    }
    for (int j = 0; j < k; ++j) {
      Y.points.push_back(v1(2 + up(rng)));
      b[j] = ur(rng);
    }
    X.weights = a;
    Y.weights = b * (a.sum() / b.sum());
    const auto res = solve_dual_discrete(m, X, Y);
    const double mass = X.total_mass();

    const Vec rows = res.plan.coupling.rowwise().sum();
    const Vec cols = res.plan.coupling.colwise().sum();
    CHECK((rows - X.weights).cwiseAbs().maxCoeff() <= 1e-9 * mass);
    CHECK((cols - Y.weights).cwiseAbs().maxCoeff() <= 1e-9 * mass);
    CHECK(res.plan.coupling.minCoeff() >= 0.0);

    double dual_value = X.weights.dot(res.potentials.u) + Y.weights.dot(res.potentials.v);
    CHECK(std::abs(dual_value - res.plan.value) <= 1e-8 * std::max(1.0, mass));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) {
        const double slack = res.potentials.u[i] + res.potentials.v[j] -
                             evaluate(m, X.points[i], Y.points[j]);
        CHECK(slack >= -1e-10);
        if (res.plan.coupling(i, j) > 1e-12 * mass) CHECK(slack <= 1e-8);
      }
  }
}

TEST_CASE("exact LP equals exhaustive vertex enumeration on tiny instances") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ur(0.2, 1.0), up(-1, 1);
  const auto m = CostModel::Quadratic(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 3, k = 1 + (trial / 3) % 3;  // up to 3x3, <= 6 points
    WeightedCloud X, Y;
    Vec a(n), b(k);
    for (int i = 0; i < n; ++i) {
      X.points.push_back(v1(up(rng)));
      a[i] = ur(rng);
    }
    for (int j = 0; j < k; ++j) {
      Y.points.push_back(v1(up(rng)));
      b[j] = ur(rng);
    }
    b *= a.sum() / b.sum();
    X.weights = a;
    Y.weights = b;
    Mat cost(n, k);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) cost(i, j) = evaluate(m, X.points[i], Y.points[j]);
    const auto res = solve_dual_discrete(m, X, Y);
    const double brute = brute_force_best_value(cost, a, b);
    CHECK(res.plan.value == doctest::Approx(brute).epsilon(1e-10));
  }
}

TEST_CASE("entropic method approaches the exact value with a valid certificate") {
  const auto m = CostModel::Quadratic(1);
  WeightedCloud X, Y;
  for (int i = 0; i < 6; ++i) X.points.push_back(v1(i / 5.0));
  for (int j = 0; j < 6; ++j) Y.points.push_back(v1(j / 5.0));
  X.weights = Vec::Ones(6);
  Y.weights = Vec::Ones(6);
  const auto exact = solve_dual_discrete(m, X, Y);
  DualOptions opts;
  opts.method = DualMethod::entropic;
  opts.epsilon = 0.05;
  const auto ent = solve_dual_discrete(m, X, Y, opts);
  CHECK(ent.suboptimality_bound >= -1e-9);
  CHECK(std::abs(ent.plan.value - exact.plan.value) <=
        std::max(1e-6, 1.1 * ent.suboptimality_bound));
  const Vec rows = ent.plan.coupling.rowwise().sum();
  CHECK((rows - X.weights).cwiseAbs().maxCoeff() <= 1e-9 * X.total_mass());
}
