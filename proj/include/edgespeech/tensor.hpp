#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace edgespeech {

/// Dense row-major double tensor. Activations are [channels x time],
/// convolution kernels [out x in x kernel], transposed-convolution kernels
/// [in x out x kernel].
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
  Tensor(std::vector<std::size_t> dims, std::vector<double> values);

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  double& at(std::size_t row, std::size_t col) { return data[row * shape[1] + col]; }
  double at(std::size_t row, std::size_t col) const { return data[row * shape[1] + col]; }

  std::span<double> values() { return data; }
  std::span<const double> values() const { return data; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  void fill(double v);
};

std::size_t element_count(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

/// [rows x cols] -> [cols x rows]
Tensor transpose(const Tensor& m);

double dot(const Tensor& a, const Tensor& b);

}  // namespace edgespeech
