#include "tdadur/nnet/tensor.hpp"

#include <algorithm>

#include "tdadur/error.hpp"

namespace tdadur::nn {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : shape_{rows, cols}, data_(rows * cols, fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || shape_.size() > 2) throw StructuralError("Tensor: rank must be 1 or 2");
  std::size_t n = 1;
  for (auto d : shape_) n *= d;
  if (n != data_.size()) {
    throw StructuralError("Tensor: data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_string());
  }
}

Tensor Tensor::vector(std::size_t n, double fill) {
  return Tensor({n}, std::vector<double>(n, fill));
}

Tensor Tensor::zeros_like(const Tensor& t) {
  return Tensor(t.shape_, std::vector<double>(t.size(), 0.0));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void Tensor::add_inplace(const Tensor& other, double scale) {
  if (other.size() != size()) {
    throw StructuralError("Tensor::add_inplace: " + shape_string() + " vs " + other.shape_string());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

void round_to_float(Tensor& t) {
  for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace tdadur::nn
