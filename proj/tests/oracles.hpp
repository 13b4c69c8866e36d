#pragma once

// Independent reference implementations used only by tests. Each oracle takes
// a deliberately different route from the library code it checks.

#include <functional>
#include <utility>
#include <vector>

#include "mtp/graph.hpp"
#include "mtp/matrix.hpp"

namespace oracle {

// Transitive closure via Floyd-Warshall on booleans; closure(i,j)=1 iff a
// path i -> j with >=1 edge exists. The library computes the same relation
// (transposed) by repeated BFS.
inline mtp::BoolMatrix fw_closure(const mtp::DirectedGraph& g) {
  mtp::BoolMatrix c(g.n, g.n);
  for (const auto& [i, k] : g.edges) c.at(i, k) = 1;
  for (int m = 0; m < g.n; ++m)
    for (int i = 0; i < g.n; ++i)
      if (c.at(i, m))
        for (int j = 0; j < g.n; ++j)
          if (c.at(m, j)) c.at(i, j) = 1;
  return c;
}

// Four-clause path-degree classifier, transcribed directly from the recursive
// definition with no sharing or memoisation.
inline bool deg0(int s, int t, const mtp::BoolMatrix&, const mtp::BoolMatrix& r) {
  return r.at(t, s) != 0;
}

inline bool deg1(int s, int t, const mtp::BoolMatrix& a, const mtp::BoolMatrix& r) {
  if (deg0(s, t, a, r)) return false;
  for (int u = 0; u < a.cols; ++u)
    if (a.at(s, u) && r.at(t, u)) return true;
  return false;
}

inline bool deg2(int s, int t, const mtp::BoolMatrix& a, const mtp::BoolMatrix& r) {
  if (deg0(s, t, a, r) || deg1(s, t, a, r)) return false;
  for (int u = 0; u < a.cols; ++u)
    if (a.at(s, u) && deg1(u, t, a, r)) return true;
  return false;
}

inline int classify_degree(int s, int t, const mtp::BoolMatrix& a,
                           const mtp::BoolMatrix& r) {
  if (deg0(s, t, a, r)) return 0;
  if (deg1(s, t, a, r)) return 1;
  if (deg2(s, t, a, r)) return 2;
  return 3;
}

// Central finite difference of a scalar function of one packed parameter
// vector, evaluated coordinate by coordinate.
inline std::vector<double> central_diff(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// Relative error with an absolute floor, so zero-gradient coordinates are
// compared on an absolute scale instead of amplifying rounding noise.
inline double rel_err(double a, double b, double floor = 1.0) {
  double scale = floor;
  if (std::abs(a) > scale) scale = std::abs(a);
  if (std::abs(b) > scale) scale = std::abs(b);
  return std::abs(a - b) / scale;
}

inline double max_rel_err(const std::vector<double>& a,
                          const std::vector<double>& b, double floor = 1.0) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, rel_err(a[i], b[i], floor));
  return worst;
}

}  // namespace oracle
