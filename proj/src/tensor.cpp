// SPDX-License-Identifier: Apache-2.0
#include "ecgjepa/tensor.hpp"

#include "ecgjepa/error.hpp"

namespace ecgjepa {

template <typename T>
Mat<T>& ParameterSet<T>::add_vector(const std::string& name, Eigen::Index n) {
  insert(name, Tensor<T>{{static_cast<std::uint32_t>(n)}, Mat<T>::Zero(1, n)});
  return tensors_.at(name).value;
}

template <typename T>
Mat<T>& ParameterSet<T>::add_matrix(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  insert(name, Tensor<T>{{static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols)},
                         Mat<T>::Zero(rows, cols)});
  return tensors_.at(name).value;
}

template <typename T>
void ParameterSet<T>::insert(const std::string& name, Tensor<T> tensor) {
  if (!tensors_.emplace(name, std::move(tensor)).second) {
    throw ValidationError("duplicate tensor name " + name);
  }
}

template <typename T>
Tensor<T>& ParameterSet<T>::tensor(const std::string& name) {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ValidationError("no tensor named " + name);
  return it->second;
}

template <typename T>
const Tensor<T>& ParameterSet<T>::tensor(const std::string& name) const {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ValidationError("no tensor named " + name);
  return it->second;
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

template <typename T>
ParameterSet<T> ParameterSet<T>::zeros_like() const {
  ParameterSet out;
  for (const auto& [name, t] : tensors_) {
    out.insert(name, Tensor<T>{t.dims, Mat<T>::Zero(t.value.rows(), t.value.cols())});
  }
  return out;
}

template <typename T>
void ParameterSet<T>::set_zero() {
  for (auto& [name, t] : tensors_) t.value.setZero();
}

template <typename T>
bool ParameterSet<T>::all_finite() const {
  for (const auto& [name, t] : tensors_) {
    if (!t.value.allFinite()) return false;
  }
  return true;
}

template <typename T>
bool ParameterSet<T>::same_layout(const ParameterSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (const auto& [name, t] : tensors_) {
    const auto it = other.tensors_.find(name);
    if (it == other.tensors_.end() || it->second.dims != t.dims) return false;
  }
  return true;
}

template class ParameterSet<float>;
template class ParameterSet<double>;

}  // namespace ecgjepa
