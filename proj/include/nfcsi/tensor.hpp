#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nfcsi/common.hpp"

namespace nfcsi {

// Dense NCHW tensor. Row-major: index = ((n*C + c)*H + y)*W + x.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w) { resize(n, c, h, w); }

  // Sets the shape. Reuses the existing allocation without clearing when the
  // element count is unchanged; every op fully overwrites its output.
  void resize(int n, int c, int h, int w) {
    if (n < 0 || c < 0 || h < 0 || w < 0) throw ShapeError("negative tensor dim");
    std::size_t total = static_cast<std::size_t>(n) * c * h * w;
    n_ = n; c_ = c; h_ = h; w_ = w;
    if (total != data_.size()) data_.assign(total, T{});
  }

  // Reinterprets the dims without touching the (row-major) payload.
  void reshape(int n, int c, int h, int w) {
    if (static_cast<std::int64_t>(n) * c * h * w != size()) {
      throw ShapeError("reshape must preserve element count");
    }
    n_ = n; c_ = c; h_ = h; w_ = w;
  }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t sample_size() const { return static_cast<std::int64_t>(c_) * h_ * w_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T* sample(int n) { return data_.data() + n * sample_size(); }
  const T* sample(int n) const { return data_.data() + n * sample_size(); }

  T& at(int n, int c, int y, int x) {
    return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x];
  }
  const T& at(int n, int c, int y, int x) const {
    return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  std::string shape_str() const {
    return "(" + std::to_string(n_) + "," + std::to_string(c_) + "," +
           std::to_string(h_) + "," + std::to_string(w_) + ")";
  }

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> data_;
};

template <typename T>
void require_shape(const Tensor<T>& t, int n, int c, int h, int w,
                   const char* what) {
  if (t.n() != n || t.c() != c || t.h() != h || t.w() != w) {
    throw ShapeError(std::string(what) + ": expected (" + std::to_string(n) +
                     "," + std::to_string(c) + "," + std::to_string(h) + "," +
                     std::to_string(w) + "), got " + t.shape_str());
  }
}

}  // namespace nfcsi
