#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace plantrec {

/// Dense rank-3 tensor, row-major, double only. Covers the N x N x |Y_T|
/// relation tensors; anything 2-D uses Eigen.
struct Tensor3 {
  int d0 = 0, d1 = 0, d2 = 0;
  std::vector<double> v;

  Tensor3() = default;
  Tensor3(int a, int b, int c, double fill = 0.0)
      : d0(a), d1(b), d2(c), v(static_cast<std::size_t>(a) * b * c, fill) {}

  double& at(int i, int j, int k) {
    assert(i >= 0 && i < d0 && j >= 0 && j < d1 && k >= 0 && k < d2);
    return v[(static_cast<std::size_t>(i) * d1 + j) * d2 + k];
  }
  double at(int i, int j, int k) const {
    assert(i >= 0 && i < d0 && j >= 0 && j < d1 && k >= 0 && k < d2);
    return v[(static_cast<std::size_t>(i) * d1 + j) * d2 + k];
  }

  std::size_t size() const { return v.size(); }

  bool operator==(const Tensor3&) const = default;
};

}  // namespace plantrec
