#include "hmap/tensor/array.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace hmap {

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const std::string& what) {
  if (a == b) return;
  std::ostringstream os;
  os << what << ": shape mismatch " << to_string(a) << " vs " << to_string(b);
  if (a.size() != b.size()) {
    os << " (rank " << a.size() << " vs " << b.size() << ")";
  } else {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] != b[i]) {
        os << " (dimension " << i << ": " << a[i] << " vs " << b[i] << ")";
        break;
      }
    }
  }
  throw ShapeError(os.str());
}

template <typename T>
Array<T>::Array(Shape shape, T fill) : shape_(std::move(shape)) {
  for (Index e : shape_) {
    if (e < 0) throw ShapeError("negative extent in shape " + to_string(shape_));
  }
  data_.assign(static_cast<std::size_t>(numel(shape_)), fill);
}

template <typename T>
Array<T>::Array(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<Index>(data_.size()) != numel(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + to_string(shape_));
  }
}

template <typename T>
Index Array<T>::dim(Index axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

template <typename T>
T& Array<T>::at(Index n, Index c, Index h, Index w) {
  return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

template <typename T>
const T& Array<T>::at(Index n, Index c, Index h, Index w) const {
  return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

template <typename T>
T Array<T>::item() const {
  if (data_.size() != 1) throw ShapeError("item() on array of shape " + to_string(shape_));
  return data_[0];
}

template <typename T>
void Array<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
Array<T> Array<T>::reshaped(Shape shape) const {
  if (numel(shape) != size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Array(std::move(shape), data_);
}

template <typename T>
void write_array(std::ostream& os, const Array<T>& a) {
  const auto rank = static_cast<std::uint32_t>(a.rank());
  os.write(reinterpret_cast<const char*>(&rank), sizeof rank);
  for (Index e : a.shape()) {
    const auto ext = static_cast<std::uint64_t>(e);
    os.write(reinterpret_cast<const char*>(&ext), sizeof ext);
  }
  os.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(T)));
}

template <typename T>
Array<T> read_array(std::istream& is) {
  std::uint32_t rank = 0;
  if (!is.read(reinterpret_cast<char*>(&rank), sizeof rank) || rank > 8) {
    throw Error("tensor record: bad rank");
  }
  Shape shape(rank);
  for (auto& e : shape) {
    std::uint64_t ext = 0;
    if (!is.read(reinterpret_cast<char*>(&ext), sizeof ext) || ext > (1ull << 32)) {
      throw Error("tensor record: bad extent");
    }
    e = static_cast<Index>(ext);
  }
  std::vector<T> data(static_cast<std::size_t>(numel(shape)));
  if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)))) {
    throw Error("tensor record: truncated payload");
  }
  return Array<T>(std::move(shape), std::move(data));
}

template class Array<float>;
template class Array<double>;
template void write_array(std::ostream&, const Array<float>&);
template void write_array(std::ostream&, const Array<double>&);
template Array<float> read_array(std::istream&);
template Array<double> read_array(std::istream&);

}  // namespace hmap
