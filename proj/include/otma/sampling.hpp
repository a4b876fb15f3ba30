#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "otma/types.hpp"

namespace otma {

/// Axis-aligned box [lo, hi].
struct Box {
  Vec lo, hi;
  int dim() const { return static_cast<int>(lo.size()); }
};

/// Van der Corput radical inverse.
double halton(std::uint64_t index, int base);

/// Tensor grid with `per_dim` points per axis plus `n_qmc` Halton points.
std::vector<Vec> sample_box(const Box& box, int per_dim, int n_qmc);

/// Orthonormal pair (xi, eta), |xi . eta| <= 1e-12 enforced by Gram-Schmidt.
struct Frame {
  Vec xi, eta;
};

/// `count` frames: a couple of canonical pairs (axis-aligned and, when given,
/// aligned with `preferred`), the rest from seeded random rotations.
/// Returns an empty list in dimension 1 where no orthogonal pair exists.
std::vector<Frame> orthonormal_frames(int dim, int count, std::mt19937& rng,
                                      const Vec* preferred = nullptr);

}  // namespace otma
