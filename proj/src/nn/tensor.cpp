#include "windgen/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "windgen/error.hpp"

namespace windgen::nn {

std::size_t shape_size(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_))
    throw InputError("tensor of shape " + shape_string(shape_) + " cannot hold " +
                     std::to_string(values_.size()) + " values");
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

void Tensor::check_finite(std::string_view what) const {
  if (!all_finite()) throw NumericalError("non-finite values in " + std::string(what));
}

void Tensor::fill(double value) noexcept { std::fill(values_.begin(), values_.end(), value); }

}  // namespace windgen::nn
