#include "otma/condition_checks.hpp"

#include <cmath>
#include <sstream>

namespace otma {

std::string to_string(Condition c) {
  switch (c) {
    case Condition::A1: return "A1";
    case Condition::A2: return "A2";
    case Condition::A3w: return "A3w";
    case Condition::A3: return "A3";
  }
  return "?";
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::holds: return "holds";
    case Verdict::fails: return "fails";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

double mtw_tensor(const CostModel& model, const Vec& x, const Vec& y, const Vec& xi,
                  const Vec& eta) {
  const int n = model.dim;
  const DerivativeBundle b = derivative_bundle(model, x, y, 4);
  const Mat& M = b.c_xy_inv;
  const Vec et = M * eta;
  double F = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double xij = xi[i] * xi[j];
      if (xij == 0.0) continue;
      for (int r = 0; r < n; ++r)
        for (int s = 0; s < n; ++s) {
          double mid = 0.0;
          for (int k = 0; k < n; ++k)
            for (int l = 0; l < n; ++l) mid += M(k, l) * b.c_xxy(i, j, k) * b.c_xyy(l, r, s);
          F += (b.c_xxyy(i, j, r, s) - mid) * xij * et[r] * et[s];
        }
    }
  return F;
}

namespace {

std::string resolution_string(const SampleRegion& r) {
  std::ostringstream os;
  os << "grid " << r.grid_per_dim << "^n + " << r.n_qmc << " halton per box, " << r.n_frames
     << " frames";
  return os.str();
}

const char* kSampledNote =
    "sampled certification, not a proof; p,q restricted to the gradient ranges over the "
    "sampled clouds";

}  // namespace

ConditionReport check_A3w(const CostModel& model, const SampleRegion& region, double delta) {
  ConditionReport rep;
  rep.condition = delta > 0.0 ? Condition::A3 : Condition::A3w;
  rep.seed = region.seed;
  rep.resolution = resolution_string(region);
  rep.note = kSampledNote;

  const int n = model.dim;
  if (n < 2) {
    rep.verdict = Verdict::holds;
    rep.note = "vacuous in dimension 1: no orthogonal pair exists";
    return rep;
  }
  std::mt19937 rng(region.seed);
  const auto xs = sample_box(region.x_box, region.grid_per_dim, region.n_qmc);
  const auto ys = sample_box(region.y_box, region.grid_per_dim, region.n_qmc);

  double best = std::numeric_limits<double>::infinity();
  for (const Vec& x : xs) {
    for (const Vec& y : ys) {
      if ((x - y).norm() < region.separation_min || !is_admissible(model, x, y)) {
        ++rep.samples_skipped;
        continue;
      }
      DerivativeBundle b;
      try {
        b = derivative_bundle(model, x, y, 4);
      } catch (const SingularMixedHessian&) {
        ++rep.samples_skipped;
        continue;
      }
      const Vec d = x - y;
      const auto frames = orthonormal_frames(n, region.n_frames, rng, &d);
      for (const auto& fr : frames) {
        const double F = [&] {
          const Mat& M = b.c_xy_inv;
          const Vec et = M * fr.eta;
          double acc = 0.0;
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
              const double xij = fr.xi[i] * fr.xi[j];
              for (int r = 0; r < n; ++r)
                for (int s = 0; s < n; ++s) {
                  double mid = 0.0;
                  for (int k = 0; k < n; ++k)
                    for (int l = 0; l < n; ++l)
                      mid += M(k, l) * b.c_xxy(i, j, k) * b.c_xyy(l, r, s);
                  acc += (b.c_xxyy(i, j, r, s) - mid) * xij * et[r] * et[s];
                }
            }
          return acc;
        }();
        ++rep.samples_used;
        const double margin = F - delta;  // unit frames: delta |xi|^2 |eta|^2 = delta
        if (margin < best) {
          best = margin;
          rep.witness = Witness{x, y, fr.xi, fr.eta};
        }
      }
    }
  }
  if (rep.samples_used == 0) {
    rep.verdict = Verdict::inconclusive;
    rep.note = "all samples skipped (inadmissible region)";
    return rep;
  }
  rep.extremal_value = best;
  rep.verdict = best >= -kReportTol ? Verdict::holds : Verdict::fails;
  return rep;
}

ConditionReport check_A1(const CostModel& model, const SampleRegion& region) {
  ConditionReport rep;
  rep.condition = Condition::A1;
  rep.seed = region.seed;
  rep.resolution = resolution_string(region);
  rep.note = kSampledNote;

  const auto xs = sample_box(region.x_box, region.grid_per_dim, region.n_qmc);
  const double tol = 1e-6;
  double worst = 0.0;

  auto record_failure = [&](const Vec& x, const Vec& y) {
    rep.verdict = Verdict::fails;
    rep.witness = Witness{x, y, Vec::Zero(model.dim), Vec::Zero(model.dim)};
  };

  if (region.p_box) {
    const auto ps = sample_box(*region.p_box, region.grid_per_dim, region.n_qmc);
    for (const Vec& x : xs) {
      for (const Vec& p : ps) {
        ++rep.samples_used;
        try {
          const Vec y = solve_Y(model, x, p);
          const auto b = derivative_bundle(model, x, y, 2);
          const double err = (b.c_x - p).norm();
          worst = std::max(worst, err);
          if (err > tol) {
            record_failure(x, p);
            rep.extremal_value = err;
            return rep;
          }
        } catch (const Error&) {
          record_failure(x, p);
          rep.extremal_value = std::numeric_limits<double>::infinity();
          rep.note = "solve_Y failed: p outside the gradient range";
          return rep;
        }
      }
    }
    rep.extremal_value = worst;
    rep.verdict = Verdict::holds;
    return rep;
  }

  const auto ys = sample_box(region.y_box, region.grid_per_dim, region.n_qmc);
  for (const Vec& x : xs) {
    for (const Vec& y : ys) {
      if ((x - y).norm() < region.separation_min || !is_admissible(model, x, y)) {
        ++rep.samples_skipped;
        continue;
      }
      ++rep.samples_used;
      try {
        const auto b = derivative_bundle(model, x, y, 2);
        const double err_y = (solve_Y(model, x, b.c_x) - y).norm();
        const double err_x = (solve_X(model, b.c_y, y) - x).norm();
        worst = std::max({worst, err_y, err_x});
        if (worst > tol) {
          record_failure(x, y);
          rep.extremal_value = worst;
          return rep;
        }
      } catch (const Error&) {
        record_failure(x, y);
        rep.extremal_value = std::numeric_limits<double>::infinity();
        return rep;
      }
    }
  }
  if (rep.samples_used == 0) {
    rep.verdict = Verdict::inconclusive;
    return rep;
  }
  rep.extremal_value = worst;
  rep.verdict = Verdict::holds;
  return rep;
}

ConditionReport check_A2(const CostModel& model, const SampleRegion& region) {
  ConditionReport rep;
  rep.condition = Condition::A2;
  rep.seed = region.seed;
  rep.resolution = resolution_string(region);
  rep.note = kSampledNote;

  const auto xs = sample_box(region.x_box, region.grid_per_dim, region.n_qmc);
  const auto ys = sample_box(region.y_box, region.grid_per_dim, region.n_qmc);
  double min_det = std::numeric_limits<double>::infinity();
  double tol = 0.0;
  for (const Vec& x : xs) {
    for (const Vec& y : ys) {
      if ((x - y).norm() < region.separation_min) {
        ++rep.samples_skipped;
        continue;
      }
      ++rep.samples_used;
      try {
        const auto b = derivative_bundle(model, x, y, 2);
        tol = std::max(tol, singular_tol(b.c_xy));
        if (std::abs(b.det_cxy) < min_det) {
          min_det = std::abs(b.det_cxy);
          rep.witness = Witness{x, y, Vec::Zero(model.dim), Vec::Zero(model.dim)};
        }
      } catch (const SingularMixedHessian&) {
        min_det = 0.0;
        rep.witness = Witness{x, y, Vec::Zero(model.dim), Vec::Zero(model.dim)};
      } catch (const DomainViolation&) {
        --rep.samples_used;
        ++rep.samples_skipped;
      }
    }
  }
  if (rep.samples_used == 0) {
    rep.verdict = Verdict::inconclusive;
    return rep;
  }
  rep.extremal_value = min_det;
  rep.verdict = min_det > std::max(tol, 1e-300) ? Verdict::holds : Verdict::fails;
  return rep;
}

std::vector<PowerVerdict> classify_power_costs(const std::vector<double>& m_list, int sign,
                                               int dim, unsigned seed, int grid_per_dim,
                                               int n_qmc, int n_frames) {
  std::vector<PowerVerdict> table;
  table.reserve(m_list.size());
  SampleRegion region;
  region.x_box = {Vec::Constant(dim, -0.5), Vec::Constant(dim, 0.5)};
  Vec lo = Vec::Constant(dim, -0.5), hi = Vec::Constant(dim, 0.5);
  lo[0] = 1.5;
  hi[0] = 2.5;
  region.y_box = {lo, hi};
  region.separation_min = 0.5;
  region.grid_per_dim = grid_per_dim;
  region.n_qmc = n_qmc;
  region.n_frames = n_frames;
  region.seed = seed;

  for (double m : m_list) {
    PowerVerdict v;
    v.m = m;
    v.sign = sign;
    v.expected_holds = (m == 2.0) || (sign > 0 && m >= -2.0 && m < 1.0);
    CostModel model = CostModel::Power(dim, m, sign);
    model.sep_min = 0.5;
    v.report = check_A3w(model, region, 0.0);
    table.push_back(std::move(v));
  }
  return table;
}

ThresholdResult compound_threshold(double p, int dim, unsigned seed, int n_frames,
                                   double rho_max) {
  ThresholdResult res;
  res.p = p;
  res.expected_rho = p > 1.0 ? 1.0 / (p - 1.0) : std::numeric_limits<double>::infinity();

  const CostModel model = CostModel::PowerCompound(dim, p);
  std::mt19937 rng(seed);
  const Vec x = Vec::Zero(dim);
  Vec dir = Vec::Zero(dim);
  dir[0] = 1.0;

  auto min_F = [&](double rho) {
    const Vec y = x - std::sqrt(rho) * dir;
    const Vec d = x - y;
    std::mt19937 frame_rng(seed);  // same frames at every rho
    const auto frames = orthonormal_frames(dim, n_frames, frame_rng, &d);
    double best = std::numeric_limits<double>::infinity();
    double scale = 0.0;
    for (const auto& fr : frames) {
      const double F = mtw_tensor(model, x, y, fr.xi, fr.eta);
      best = std::min(best, F);
      scale = std::max(scale, std::abs(F));
    }
    res.max_abs_tensor = std::max(res.max_abs_tensor, scale);
    return best;
  };

  const double fail_tol = 1e-11;
  double lo = 1e-3, hi = 1e-3;
  bool bracketed = false;
  while (hi < rho_max) {
    if (min_F(hi) < -fail_tol) {
      bracketed = true;
      break;
    }
    lo = hi;
    hi *= 2.0;
  }
  if (!bracketed) {
    res.found = false;
    res.note = res.max_abs_tensor <= 1e-12
                   ? "tensor vanishes identically over the sweep (cost is equivalent to the "
                     "bilinear one); no strict-failure threshold exists"
                   : "no A3w failure detected in the sweep range";
    return res;
  }
  while (hi - lo > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    (min_F(mid) < -fail_tol ? hi : lo) = mid;
  }
  res.found = true;
  res.threshold_rho = 0.5 * (lo + hi);
  return res;
}

}  // namespace otma
