#include "edgespeech/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "edgespeech/error.hpp"

namespace edgespeech {

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : shape(std::move(dims)), data(element_count(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values)
    : shape(std::move(dims)), data(std::move(values)) {
  if (data.size() != element_count(shape)) {
    fail(ErrorCode::ShapeMismatch, std::to_string(data.size()) + " values for shape " + shape_string(shape));
  }
}

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

Tensor transpose(const Tensor& m) {
  if (m.rank() != 2) fail(ErrorCode::ShapeMismatch, "transpose needs a matrix, got " + shape_string(m.shape));
  const std::size_t rows = m.shape[0];
  const std::size_t cols = m.shape[1];
  Tensor out({cols, rows});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.data[c * rows + r] = m.data[r * cols + c];
  }
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) fail(ErrorCode::ShapeMismatch, "dot of mismatched tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

}  // namespace edgespeech
