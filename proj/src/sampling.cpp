#include "otma/sampling.hpp"

#include <cmath>

namespace otma {

double halton(std::uint64_t index, int base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

std::vector<Vec> sample_box(const Box& box, int per_dim, int n_qmc) {
  const int n = box.dim();
  std::vector<Vec> out;
  if (per_dim > 0) {
    std::int64_t total = 1;
    for (int i = 0; i < n; ++i) total *= per_dim;
    out.reserve(static_cast<std::size_t>(total) + n_qmc);
    for (std::int64_t flat = 0; flat < total; ++flat) {
      Vec x(n);
      std::int64_t rem = flat;
      for (int i = 0; i < n; ++i) {
        const int k = static_cast<int>(rem % per_dim);
        rem /= per_dim;
        const double t = per_dim == 1 ? 0.5 : double(k) / double(per_dim - 1);
        x[i] = box.lo[i] + t * (box.hi[i] - box.lo[i]);
      }
      out.push_back(std::move(x));
    }
  }
  static const int primes[] = {2, 3, 5};
  for (int k = 0; k < n_qmc; ++k) {
    Vec x(n);
    for (int i = 0; i < n; ++i)
      x[i] = box.lo[i] + halton(k + 1, primes[i]) * (box.hi[i] - box.lo[i]);
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<Frame> orthonormal_frames(int dim, int count, std::mt19937& rng,
                                      const Vec* preferred) {
  std::vector<Frame> frames;
  if (dim < 2) return frames;
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto push = [&](Vec a, Vec b) {
    const double an = a.norm();
    if (an < 1e-12) return;
    a /= an;
    b -= a.dot(b) * a;
    const double bn = b.norm();
    if (bn < 1e-12) return;
    b /= bn;
    b -= a.dot(b) * a;  // second pass keeps |xi.eta| at roundoff level
    b.normalize();
    frames.push_back({std::move(a), std::move(b)});
  };

  Vec e0 = Vec::Zero(dim), e1 = Vec::Zero(dim);
  e0[0] = 1.0;
  e1[1] = 1.0;
  push(e0, e1);
  push(e1, e0);
  if (preferred != nullptr && preferred->norm() > 1e-12) {
    Vec t = *preferred;
    Vec perp = (std::abs(t[0]) < 0.9 * t.norm()) ? e0 : e1;
    const std::size_t before = frames.size();
    push(t, perp);
    if (frames.size() > before) {
      const Vec a = frames.back().eta, b = frames.back().xi;
      push(a, b);
    }
  }
  while (static_cast<int>(frames.size()) < count) {
    Vec a(dim), b(dim);
    for (int i = 0; i < dim; ++i) {
      a[i] = gauss(rng);
      b[i] = gauss(rng);
    }
    push(std::move(a), std::move(b));
  }
  frames.resize(count);
  return frames;
}

}  // namespace otma
