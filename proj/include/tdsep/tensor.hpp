// Copyright 2026 tdsep authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "tdsep/errors.hpp"

namespace tdsep {

// Dense row-major tensor of doubles, rank 1 to 3. Activations use
// [batch, channels, time]; weights use their natural layout.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel(shape)), 0.0);
  }

  static int64_t numel(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw DataError("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[i]; }

  // rank-3 accessors
  double& at(int b, int c, int t) {
    return data[(static_cast<size_t>(b) * shape[1] + c) * shape[2] + t];
  }
  double at(int b, int c, int t) const {
    return data[(static_cast<size_t>(b) * shape[1] + c) * shape[2] + t];
  }
  // rank-2 accessors
  double& at(int r, int c) {
    return data[static_cast<size_t>(r) * shape[1] + c];
  }
  double at(int r, int c) const {
    return data[static_cast<size_t>(r) * shape[1] + c];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

}  // namespace tdsep
