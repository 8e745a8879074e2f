#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "rfl/error.hpp"

namespace rfl {

// Dense row-major tensor. Shapes are small (rank <= 4) and fixed per node.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(count(shape), T(0));
  }
  Tensor(std::vector<int> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != count(shape)) {
      throw ShapeError("tensor data does not match shape");
    }
  }

  static std::size_t count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d < 0) throw ShapeError("negative tensor dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t size() const { return data.size(); }
  int dim(int i) const { return shape[i]; }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      out.data[i] = static_cast<U>(data[i]);
    }
    return out;
  }
};

// y[m,n] += a[m,k] * b[k,n]
template <typename T>
void matmul_acc(const T* a, const T* b, T* y, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    T* yrow = y + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) yrow[j] += av * brow[j];
    }
  }
}

// y[m,n] += a[m,k] * b^T where b is [n,k]
template <typename T>
void matmul_bt_acc(const T* a, const T* b, T* y, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    T* yrow = y + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<std::size_t>(j) * k;
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      yrow[j] += acc;
    }
  }
}

// y[k,n] += a^T * b where a is [m,k], b is [m,n]
template <typename T>
void matmul_at_acc(const T* a, const T* b, T* y, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    const T* brow = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      T* yrow = y + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) yrow[j] += av * brow[j];
    }
  }
}

}  // namespace rfl
