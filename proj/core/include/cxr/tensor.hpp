#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <vector>

namespace cxr {

// Dense row-major (n, c, h, w) value container with an optional gradient
// buffer of the same length. Lower-rank data uses trailing 1s.
struct Tensor {
  std::array<int, 4> shape{0, 0, 0, 0};
  std::vector<double> data;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(int n, int c, int h, int w)
      : shape{n, c, h, w},
        data(static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
                 static_cast<std::size_t>(h) * static_cast<std::size_t>(w),
             0.0) {}

  std::size_t size() const { return data.size(); }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + y) *
               shape[3] +
           x;
  }
  double& at(int n, int c, int y, int x) { return data[index(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const {
    return data[index(n, c, y, x)];
  }

  void alloc_grad() { grad.assign(data.size(), 0.0); }
  void zero_grad() {
    if (grad.size() != data.size()) {
      alloc_grad();
    } else {
      std::fill(grad.begin(), grad.end(), 0.0);
    }
  }
};

}  // namespace cxr
