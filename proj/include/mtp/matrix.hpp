#pragma once

#include <cstdint>
#include <vector>

#include "mtp/error.hpp"

namespace mtp {

struct BoolMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> a;

  BoolMatrix() = default;
  BoolMatrix(int r, int c) : rows(r), cols(c), a(std::size_t(r) * c, 0) {}

  std::uint8_t& at(int r, int c) { return a[std::size_t(r) * cols + c]; }
  std::uint8_t at(int r, int c) const { return a[std::size_t(r) * cols + c]; }

  bool operator==(const BoolMatrix&) const = default;
};

struct MatD {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  MatD() = default;
  MatD(int r, int c, double fill = 0.0)
      : rows(r), cols(c), a(std::size_t(r) * c, fill) {}

  double& at(int r, int c) { return a[std::size_t(r) * cols + c]; }
  double at(int r, int c) const { return a[std::size_t(r) * cols + c]; }

  bool operator==(const MatD&) const = default;
};

}  // namespace mtp
