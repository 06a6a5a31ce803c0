// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ecgjepa {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// A named parameter. Rank-1 tensors are stored as a 1 x n matrix.
template <typename T>
struct Tensor {
  std::vector<std::uint32_t> dims;
  Mat<T> value;

  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
  int rank() const { return static_cast<int>(dims.size()); }
};

/// Ordered map of named tensors: the student, teacher and predictor weights
/// each live in one, as do gradients and optimizer moments.
template <typename T>
class ParameterSet {
 public:
  using Map = std::map<std::string, Tensor<T>>;

  /// Adds a zero-initialised rank-1 (cols only) or rank-2 tensor.
  Mat<T>& add_vector(const std::string& name, Eigen::Index n);
  Mat<T>& add_matrix(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  void insert(const std::string& name, Tensor<T> tensor);

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  /// Throws ValidationError naming the missing tensor.
  Tensor<T>& tensor(const std::string& name);
  const Tensor<T>& tensor(const std::string& name) const;
  Mat<T>& operator[](const std::string& name) { return tensor(name).value; }
  const Mat<T>& operator[](const std::string& name) const { return tensor(name).value; }

  std::size_t tensor_count() const { return tensors_.size(); }
  std::size_t scalar_count() const;
  typename Map::iterator begin() { return tensors_.begin(); }
  typename Map::iterator end() { return tensors_.end(); }
  typename Map::const_iterator begin() const { return tensors_.begin(); }
  typename Map::const_iterator end() const { return tensors_.end(); }

  /// Same names and shapes, all zero.
  ParameterSet zeros_like() const;
  void set_zero();
  bool all_finite() const;
  /// True when both sets hold the same names with the same dims.
  bool same_layout(const ParameterSet& other) const;

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [name, t] : tensors_) out.insert(name, Tensor<U>{t.dims, t.value.template cast<U>()});
    return out;
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (!a.same_layout(b)) return false;
    for (const auto& [name, t] : a.tensors_) {
      if (t.value != b.tensors_.at(name).value) return false;
    }
    return true;
  }

 private:
  Map tensors_;
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

}  // namespace ecgjepa
