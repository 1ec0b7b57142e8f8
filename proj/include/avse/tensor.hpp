#pragma once

// Dense row-major tensors. Float is the default compute precision; the
// double instantiation exists for gradient checking.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace avse {

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <class S>
struct TensorT {
  std::vector<int> shape;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> shp) : shape(std::move(shp)) {
    data.assign(numel(shape), S(0));
  }
  TensorT(std::vector<int> shp, std::vector<S> values)
      : shape(std::move(shp)), data(std::move(values)) {
    if (data.size() != numel(shape))
      throw std::invalid_argument("tensor: data length " +
                                  std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
  }

  static std::size_t numel(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d <= 0) throw std::invalid_argument("tensor: non-positive dim in " + shape_str(s));
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t size() const { return data.size(); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(shape.size()); }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  S& operator[](std::size_t i) { return data[i]; }
  const S& operator[](std::size_t i) const { return data[i]; }

  S& at2(int i, int j) { return data[static_cast<std::size_t>(i) * dim(1) + j]; }
  const S& at2(int i, int j) const { return data[static_cast<std::size_t>(i) * dim(1) + j]; }

  S& at4(int b, int c, int i, int j) {
    return data[((static_cast<std::size_t>(b) * dim(1) + c) * dim(2) + i) * dim(3) + j];
  }
  const S& at4(int b, int c, int i, int j) const {
    return data[((static_cast<std::size_t>(b) * dim(1) + c) * dim(2) + i) * dim(3) + j];
  }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(S(0)); }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

inline void check_same_shape(const std::vector<int>& a, const std::vector<int>& b,
                             const char* what) {
  if (a != b)
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a) +
                                " vs " + shape_str(b));
}

// Trainable parameter: value plus accumulated gradient of the same shape.
template <class S>
struct ParamT {
  TensorT<S> value;
  TensorT<S> grad;
  std::string name;
  bool bn_affine = false;  // excluded from the weight+bias count

  ParamT() = default;
  ParamT(std::vector<int> shp, std::string n) : value(shp), grad(std::move(shp)), name(std::move(n)) {}

  void zero_grad() { grad.zero(); }
  std::size_t size() const { return value.size(); }
};

using Param = ParamT<float>;

}  // namespace avse
