#pragma once

#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hmap/error.hpp"

namespace hmap {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major (NCHW for images) array of real scalars. Value type:
/// copies are deep.
template <typename T>
class Array {
 public:
  using value_type = T;

  Array() = default;
  explicit Array(Shape shape, T fill = T(0));
  Array(Shape shape, std::vector<T> data);

  static Array scalar(T v) { return Array(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const;
  Index size() const noexcept { return static_cast<Index>(data_.size()); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }

  /// Element of a rank-4 NCHW array.
  T& at(Index n, Index c, Index h, Index w);
  const T& at(Index n, Index c, Index h, Index w) const;

  /// The single value of a one-element array.
  T item() const;

  void fill(T v);
  Array reshaped(Shape shape) const;

  template <typename U>
  Array<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Array<U>(shape_, std::move(out));
  }

  friend bool operator==(const Array& a, const Array& b) = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Throws ShapeError naming `what` unless both shapes are identical.
void require_same_shape(const Shape& a, const Shape& b, const std::string& what);

// Little-endian tensor serialization: u32 rank, u64 extents, raw payload.
template <typename T>
void write_array(std::ostream& os, const Array<T>& a);
template <typename T>
Array<T> read_array(std::istream& is);

extern template class Array<float>;
extern template class Array<double>;

}  // namespace hmap
