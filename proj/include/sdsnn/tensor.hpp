// Dense row-major float64 tensor. NCHW for activations, OIHW for kernels.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sdsnn/error.hpp"

namespace sdsnn {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (data_.size() != shape_numel(shape_))
      throw DimensionError("buffer of " + std::to_string(data_.size()) + " values for shape " + shape_str(shape_));
  }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_, 0.0); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& vec() noexcept { return data_; }
  const std::vector<double>& vec() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // 4-D accessors (NCHW / OIHW).
  std::size_t offset(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept { return data_[offset(n, c, h, w)]; }
  const double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[offset(n, c, h, w)];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(*this, o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

  static void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (a.shape_ != b.shape_)
      throw DimensionError(std::string(where) + ": shapes " + shape_str(a.shape_) + " and " + shape_str(b.shape_));
  }

 private:
  void check_shape() const {
    for (auto d : shape_)
      if (d == 0) throw DimensionError("zero-sized dimension in shape " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

inline void require_rank4(const Tensor& t, const char* where) {
  if (t.rank() != 4) throw DimensionError(std::string(where) + ": expected NCHW tensor, got " + shape_str(t.shape()));
}

}  // namespace sdsnn
