#include "toothseg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace toothseg {

void PointSet::validate() const {
  if (coords.rows() < 1) throw PreconditionError("PointSet: N >= 1 required");
  if (normals.rows() != coords.rows() || coords.cols() != 3 || normals.cols() != 3)
    throw PreconditionError("PointSet: coords/normals must both be N x 3");
  if (!coords.allFinite() || !normals.allFinite())
    throw PreconditionError("PointSet: non-finite values");
  for (int i = 0; i < normals.rows(); ++i) {
    if (std::abs(normals.row(i).norm() - 1.0) > 1e-4)
      throw PreconditionError("PointSet: normal row " + std::to_string(i) +
                              " is not unit length");
  }
}

namespace {

inline double sq_dist(const Mat& a, int i, const Mat& b, int j) {
  const double dx = a(i, 0) - b(j, 0);
  const double dy = a(i, 1) - b(j, 1);
  const double dz = a(i, 2) - b(j, 2);
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

std::vector<int> farthest_point_sample(const PointSet& points, int m, int start_index) {
  const int n = points.size();
  if (m < 1 || m > n) throw PreconditionError("farthest_point_sample: need 1 <= m <= N");
  if (start_index < 0 || start_index >= n)
    throw PreconditionError("farthest_point_sample: start_index out of range");

  const Mat& c = points.coords;
  std::vector<int> out;
  out.reserve(m);
  out.push_back(start_index);

  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  taken[start_index] = 1;
  int last = start_index;
  for (int s = 1; s < m; ++s) {
    int best = -1;
    double best_d2 = -1.0;
#pragma omp parallel
    {
      int lbest = -1;
      double lbest_d2 = -1.0;
#pragma omp for nowait
      for (int i = 0; i < n; ++i) {
        const double d2 = sq_dist(c, i, c, last);
        if (d2 < min_d2[i]) min_d2[i] = d2;
        if (taken[i]) continue;
        if (min_d2[i] > lbest_d2 || (min_d2[i] == lbest_d2 && i < lbest)) {
          lbest_d2 = min_d2[i];
          lbest = i;
        }
      }
#pragma omp critical
      {
        if (best == -1 || lbest_d2 > best_d2 || (lbest_d2 == best_d2 && lbest != -1 && lbest < best)) {
          best_d2 = lbest_d2;
          best = lbest;
        }
      }
    }
    out.push_back(best);
    taken[best] = 1;
    last = best;
  }
  return out;
}

NeighborIndex knn_indices(const PointSet& source, const Mat& queries, int k) {
  const int n = source.size();
  const int q = static_cast<int>(queries.rows());
  if (k < 1 || k > n) throw PreconditionError("knn_indices: need 1 <= k <= N");
  if (queries.cols() != 3) throw PreconditionError("knn_indices: queries must be Q x 3");

  NeighborIndex result;
  result.indices.resize(q, k);
  const Mat& c = source.coords;

#pragma omp parallel
  {
    std::vector<std::pair<double, int>> cand(n);
#pragma omp for
    for (int qi = 0; qi < q; ++qi) {
      for (int i = 0; i < n; ++i) cand[i] = {sq_dist(c, i, queries, qi), i};
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
      for (int j = 0; j < k; ++j) result.indices(qi, j) = cand[j].second;
    }
  }
  return result;
}

BoundaryMask extract_boundary_set(const PointSet& points,
                                  const std::vector<int>& instance_labels,
                                  int k_b) {
  const int n = points.size();
  if (k_b < 1) throw PreconditionError("extract_boundary_set: k_b >= 1 required");
  if (k_b >= n) throw PreconditionError("extract_boundary_set: k_b must be < N");
  if (static_cast<int>(instance_labels.size()) != n)
    throw PreconditionError("extract_boundary_set: label length mismatch");
  for (int l : instance_labels)
    if (l < 0) throw PreconditionError("extract_boundary_set: negative label");

  BoundaryMask mask;
  mask.is_boundary.assign(n, 0);
  const Mat& c = points.coords;

#pragma omp parallel
  {
    std::vector<std::pair<double, int>> cand;
    cand.reserve(n - 1);
#pragma omp for
    for (int i = 0; i < n; ++i) {
      cand.clear();
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        cand.push_back({sq_dist(c, j, c, i), j});
      }
      std::partial_sort(cand.begin(), cand.begin() + k_b, cand.end());
      const int own = instance_labels[i];
      for (int j = 0; j < k_b; ++j) {
        if (instance_labels[cand[j].second] != own) {
          mask.is_boundary[i] = 1;
          break;
        }
      }
    }
  }
  return mask;
}

namespace reference {

std::vector<int> farthest_point_sample(const PointSet& points, int m, int start_index) {
  const int n = points.size();
  if (m < 1 || m > n) throw PreconditionError("reference fps: need 1 <= m <= N");
  if (start_index < 0 || start_index >= n)
    throw PreconditionError("reference fps: start_index out of range");

  std::vector<int> selected{start_index};
  std::vector<char> taken(n, 0);
  taken[start_index] = 1;
  while (static_cast<int>(selected.size()) < m) {
    // Recompute every point's distance to the full selected set each step.
    int best = -1;
    double best_d2 = -1.0;
    for (int i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double d2 = std::numeric_limits<double>::infinity();
      for (int s : selected) d2 = std::min(d2, sq_dist(points.coords, i, points.coords, s));
      if (d2 > best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
    selected.push_back(best);
    taken[best] = 1;
  }
  return selected;
}

NeighborIndex knn_indices(const PointSet& source, const Mat& queries, int k) {
  const int n = source.size();
  if (k < 1 || k > n) throw PreconditionError("reference knn: need 1 <= k <= N");
  NeighborIndex result;
  result.indices.resize(queries.rows(), k);
  for (int qi = 0; qi < queries.rows(); ++qi) {
    std::vector<std::pair<double, int>> all(n);
    for (int i = 0; i < n; ++i) all[i] = {sq_dist(source.coords, i, queries, qi), i};
    std::sort(all.begin(), all.end());
    for (int j = 0; j < k; ++j) result.indices(qi, j) = all[j].second;
  }
  return result;
}

BoundaryMask extract_boundary_set(const PointSet& points,
                                  const std::vector<int>& instance_labels,
                                  int k_b) {
  const int n = points.size();
  if (k_b < 1 || k_b >= n) throw PreconditionError("reference boundary: bad k_b");
  BoundaryMask mask;
  mask.is_boundary.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> all;
    for (int j = 0; j < n; ++j)
      if (j != i) all.push_back({sq_dist(points.coords, j, points.coords, i), j});
    std::sort(all.begin(), all.end());
    for (int j = 0; j < k_b; ++j)
      if (instance_labels[all[j].second] != instance_labels[i]) mask.is_boundary[i] = 1;
  }
  return mask;
}

}  // namespace reference

}  // namespace toothseg
