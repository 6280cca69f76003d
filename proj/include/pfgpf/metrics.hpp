#pragma once

// Error metrics: OMAT (optimal mass transfer) between equal-size point sets
// and the per-dimension mean squared error.

#include <cmath>
#include <limits>
#include <vector>

#include "pfgpf/errors.hpp"
#include "pfgpf/numerics.hpp"

namespace pfgpf {

using PointSet = std::vector<Eigen::Vector2d>;

struct Assignment {
  /// row i is matched to column column_of[i].
  std::vector<int> column_of;
  double cost = 0.0;
};

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with row/column potentials, O(n^3)).
inline Assignment hungarian(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw ShapeMismatch("hungarian: cost matrix must be square");
  const int n = static_cast<int>(cost.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials; column 0 is a virtual sink.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int row = 1; row <= n; ++row) {
    match[0] = row;
    int col0 = 0;
    std::vector<double> min_slack(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const int row0 = match[col0];
      double delta = inf;
      int col1 = 0;
      for (int col = 1; col <= n; ++col) {
        if (used[col]) continue;
        const double slack = cost(row0 - 1, col - 1) - u[row0] - v[col];
        if (slack < min_slack[col]) {
          min_slack[col] = slack;
          way[col] = col0;
        }
        if (min_slack[col] < delta) {
          delta = min_slack[col];
          col1 = col;
        }
      }
      for (int col = 0; col <= n; ++col) {
        if (used[col]) {
          u[match[col]] += delta;
          v[col] -= delta;
        } else {
          min_slack[col] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const int col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  Assignment out;
  out.column_of.assign(static_cast<std::size_t>(n), -1);
  for (int col = 1; col <= n; ++col) out.column_of[static_cast<std::size_t>(match[col] - 1)] = col - 1;
  for (int row = 0; row < n; ++row) out.cost += cost(row, out.column_of[static_cast<std::size_t>(row)]);
  return out;
}

/// (1/C) (min over permutations of sum_c d(a_c, b_pi(c))^p)^(1/p).
inline double omat(const PointSet& a, const PointSet& b, double p = 1.0) {
  if (a.size() != b.size()) throw CardinalityMismatch("omat: point sets differ in cardinality");
  if (!(p >= 1.0)) throw DomainError("omat: p must be >= 1");
  if (a.empty()) return 0.0;
  const auto c = static_cast<Eigen::Index>(a.size());
  Matrix cost(c, c);
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      cost(i, j) = std::pow((a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(j)]).norm(), p);
    }
  }
  return std::pow(hungarian(cost).cost, 1.0 / p) / static_cast<double>(c);
}

/// (1/(T d)) sum_t sum_k (x_tk - xhat_tk)^2.
inline double mse(const std::vector<Vector>& truth, const std::vector<Vector>& estimate) {
  if (truth.size() != estimate.size()) throw ShapeMismatch("mse: sequences differ in length");
  if (truth.empty()) throw ShapeMismatch("mse: empty sequences");
  double total = 0.0;
  double count = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (truth[t].size() != estimate[t].size()) throw ShapeMismatch("mse: dimension mismatch");
    total += (truth[t] - estimate[t]).squaredNorm();
    count += static_cast<double>(truth[t].size());
  }
  return total / count;
}

/// Positions [x, y] of each [x, y, vx, vy] block.
inline PointSet extract_target_positions(const Vector& x) {
  if (x.size() % 4 != 0) throw ShapeMismatch("extract_target_positions: dimension not divisible by 4");
  PointSet out;
  for (Eigen::Index m = 0; m < x.size() / 4; ++m) out.emplace_back(x(4 * m), x(4 * m + 1));
  return out;
}

}  // namespace pfgpf
