#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace unpack {

using RowMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecF = Eigen::VectorXf;
using VecD = Eigen::VectorXd;
using ConstMatMapF = Eigen::Map<const RowMatF>;
using ConstVecMapF = Eigen::Map<const VecF>;
using RowVecMapF = Eigen::Map<const Eigen::RowVectorXf>;

/// Dense row-major f32 tensor.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)), data(numel(shape), 0.0f) {}

  static std::size_t numel(const std::vector<std::int64_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           [](std::size_t a, std::int64_t b) { return a * static_cast<std::size_t>(b); });
  }
  std::size_t size() const { return data.size(); }
};

std::string shape_string(const std::vector<std::int64_t>& shape);

}  // namespace unpack
