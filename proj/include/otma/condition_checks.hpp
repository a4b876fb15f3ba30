#pragma once

#include <optional>
#include <string>
#include <vector>

#include "otma/cost_model.hpp"
#include "otma/sampling.hpp"

namespace otma {

enum class Condition { A1, A2, A3w, A3 };
enum class Verdict { holds, fails, inconclusive };

std::string to_string(Condition c);
std::string to_string(Verdict v);

/// Sampled quantifier set for the structural conditions. Boxes are sampled by
/// a tensor grid plus Halton points; frames are orthonormal (xi, eta) pairs.
struct SampleRegion {
  Box x_box, y_box;
  std::optional<Box> p_box;  // when set, A1 draws p directly from here
  int grid_per_dim = 9;
  int n_qmc = 200;
  int n_frames = 16;
  double separation_min = 0.0;
  unsigned seed = 12345;
};

struct Witness {
  Vec x, y, xi, eta;
};

struct ConditionReport {
  Condition condition = Condition::A3w;
  Verdict verdict = Verdict::inconclusive;
  double extremal_value = 0.0;
  std::optional<Witness> witness;
  long samples_used = 0;
  long samples_skipped = 0;
  unsigned seed = 0;
  std::string resolution;  // human-readable sampling resolution
  std::string note;        // interpretation caveats (sampled certification)
};

inline constexpr double kReportTol = 1e-8;

/// Regularity tensor of the cost at (x, y) contracted with (xi, eta); p is
/// implied by p = c_x(x,y). Bilinear-quadratic in (xi, eta).
double mtw_tensor(const CostModel& model, const Vec& x, const Vec& y, const Vec& xi,
                  const Vec& eta);

/// A3w (delta = 0) or its strengthened delta-coercive form over the region.
ConditionReport check_A3w(const CostModel& model, const SampleRegion& region,
                          double delta = 0.0);

/// Round-trip solvability of Y and X over the region; with region.p_box set,
/// p-samples are drawn from the box instead of the c_x image of the y-cloud.
ConditionReport check_A1(const CostModel& model, const SampleRegion& region);

/// min |det c_xy| over the sampled region against the singular tolerance.
ConditionReport check_A2(const CostModel& model, const SampleRegion& region);

struct PowerVerdict {
  double m = 0.0;
  int sign = +1;
  ConditionReport report;
  bool expected_holds = false;  // published classification for reference
};

/// A3w verdict table for the power-cost family on disjoint sampling clouds.
std::vector<PowerVerdict> classify_power_costs(const std::vector<double>& m_list, int sign,
                                               int dim = 2, unsigned seed = 12345,
                                               int grid_per_dim = 5, int n_qmc = 60,
                                               int n_frames = 16);

struct ThresholdResult {
  double p = 0.0;
  bool found = false;
  double threshold_rho = 0.0;   // |x-y|^2 at the detected A3w sign change
  double expected_rho = 0.0;    // 1/(p-1), infinite when p == 1
  double max_abs_tensor = 0.0;  // scale of the tensor over the sweep
  std::string note;
};

/// Bisection in |x-y|^2 for the compound cost's loss of A3w, resolution 1e-3.
ThresholdResult compound_threshold(double p, int dim = 2, unsigned seed = 12345,
                                   int n_frames = 24, double rho_max = 1e4);

}  // namespace otma
