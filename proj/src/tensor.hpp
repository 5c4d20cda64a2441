#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dpt {

using Vec = std::vector<double>;

// Dense row-major matrix of 64-bit floats. The whole project runs in double
// precision so finite-difference checks have unambiguous tolerances.
struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;  // rows * cols, row-major

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  std::size_t size() const { return rows * cols; }
};

bool all_finite(std::span<const double> xs);
bool all_finite(const Tensor2& t);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);  // Euclidean norm

}  // namespace dpt
