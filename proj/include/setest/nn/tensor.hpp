#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <type_traits>
#include <utility>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "setest/errors.hpp"

namespace setest::nn {

using Shape = std::vector<std::size_t>;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Cache-line aligned allocator whose value-less construct() leaves doubles
/// uninitialized, so kernel outputs that are overwritten in full skip a zero
/// fill. The fixed alignment also makes vectorized reductions sum in the same
/// order no matter where the heap places a buffer.
template <class T>
struct DefaultInitAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  DefaultInitAllocator() noexcept = default;
  template <class U>
  DefaultInitAllocator(const DefaultInitAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  friend bool operator==(const DefaultInitAllocator&, const DefaultInitAllocator<U>&) noexcept {
    return true;
  }

  template <class U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

using Storage = std::vector<double, DefaultInitAllocator<double>>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major array of doubles.
///
/// Rank is arbitrary for storage purposes; the differentiable kernels work on
/// rank-2 tensors and treat a rank-1 tensor of length n as a 1 x n row.
class Tensor {
 public:
  Tensor() : shape_{1, 1}, values_(1, 0.0) {}

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    validate_shape();
    values_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, const std::vector<double>& values)
      : shape_(std::move(shape)), values_(values.begin(), values.end()) {
    check_size();
  }

  Tensor(Shape shape, Storage values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_size();
  }

  /// Rank-2 tensor with unspecified contents; every entry must be written
  /// before it is read.
  static Tensor uninit(std::size_t rows, std::size_t cols) {
    Tensor t(Shape{rows, cols}, Storage(rows * cols));
    return t;
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }

  static Tensor scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }

  static Tensor row(const std::vector<double>& v) {
    return Tensor({1, v.size()}, v);
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }

  std::size_t rows() const noexcept { return shape_.size() == 1 ? 1 : shape_[0]; }
  std::size_t cols() const noexcept {
    return shape_.size() == 1 ? shape_[0] : size() / (shape_.empty() ? 1 : shape_[0]);
  }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& at(std::size_t r, std::size_t c) noexcept { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const noexcept { return values_[r * cols() + c]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> row_span(std::size_t r) noexcept { return {values_.data() + r * cols(), cols()}; }
  std::span<const double> row_span(std::size_t r) const noexcept {
    return {values_.data() + r * cols(), cols()};
  }

  MatrixMap mat() noexcept {
    return MatrixMap(values_.data(), static_cast<Eigen::Index>(rows()),
                     static_cast<Eigen::Index>(cols()));
  }
  ConstMatrixMap mat() const noexcept {
    return ConstMatrixMap(values_.data(), static_cast<Eigen::Index>(rows()),
                          static_cast<Eigen::Index>(cols()));
  }

  /// All values viewed as one row vector.
  Eigen::Map<Eigen::RowVectorXd> flat() noexcept {
    return Eigen::Map<Eigen::RowVectorXd>(values_.data(), static_cast<Eigen::Index>(size()));
  }
  Eigen::Map<const Eigen::RowVectorXd> flat() const noexcept {
    return Eigen::Map<const Eigen::RowVectorXd>(values_.data(), static_cast<Eigen::Index>(size()));
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  void check_size() const {
    validate_shape();
    if (shape_size(shape_) != values_.size()) {
      throw DimensionError("tensor shape " + shape_string(shape_) + " holds " +
                           std::to_string(shape_size(shape_)) + " values, got " +
                           std::to_string(values_.size()));
    }
  }

  void validate_shape() const {
    if (shape_.empty()) throw DimensionError("tensor shape must have rank >= 1");
    for (auto d : shape_) {
      if (d == 0) throw DimensionError("tensor shape " + shape_string(shape_) + " has a zero entry");
    }
  }

  Shape shape_;
  Storage values_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace setest::nn
