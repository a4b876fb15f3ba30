#pragma once

#include <Eigen/Dense>
#include <array>
#include <stdexcept>
#include <string>

namespace otma {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr int kMaxDim = 3;

/// Dense rank-3 tensor for ambient dimensions 1..3, stack-allocated.
class Tensor3 {
 public:
  explicit Tensor3(int n = 0) : n_(n) { a_.fill(0.0); }
  double& operator()(int i, int j, int k) { return a_[(i * n_ + j) * n_ + k]; }
  double operator()(int i, int j, int k) const { return a_[(i * n_ + j) * n_ + k]; }
  int dim() const { return n_; }

 private:
  int n_;
  std::array<double, kMaxDim * kMaxDim * kMaxDim> a_;
};

/// Dense rank-4 tensor, same scope as Tensor3.
class Tensor4 {
 public:
  explicit Tensor4(int n = 0) : n_(n) { a_.fill(0.0); }
  double& operator()(int i, int j, int r, int s) {
    return a_[((i * n_ + j) * n_ + r) * n_ + s];
  }
  double operator()(int i, int j, int r, int s) const {
    return a_[((i * n_ + j) * n_ + r) * n_ + s];
  }
  int dim() const { return n_; }

 private:
  int n_;
  std::array<double, kMaxDim * kMaxDim * kMaxDim * kMaxDim> a_;
};

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define OTMA_ERROR_TYPE(Name)                                      \
  struct Name : Error {                                            \
    explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
  }

OTMA_ERROR_TYPE(DomainViolation);
OTMA_ERROR_TYPE(SingularMixedHessian);
OTMA_ERROR_TYPE(NoSolution);
OTMA_ERROR_TYPE(BadGeometry);
OTMA_ERROR_TYPE(NotCConvex);
OTMA_ERROR_TYPE(MassImbalance);
OTMA_ERROR_TYPE(OracleTooLarge);
OTMA_ERROR_TYPE(NonConvergence);
OTMA_ERROR_TYPE(SeedFailure);
OTMA_ERROR_TYPE(EllipticityLost);
OTMA_ERROR_TYPE(LinearSolveFailure);
OTMA_ERROR_TYPE(StepTooSmall);
OTMA_ERROR_TYPE(ContinuationStall);
OTMA_ERROR_TYPE(ImageEscapesTarget);
OTMA_ERROR_TYPE(SchemaError);

#undef OTMA_ERROR_TYPE

}  // namespace otma
