#pragma once

#include <vector>

#include "toothseg/types.hpp"

namespace toothseg {

// Greedy farthest point sampling. First output is start_index; each following
// index maximizes the minimum distance to the already selected set, ties
// broken by smallest index.
std::vector<int> farthest_point_sample(const PointSet& points, int m, int start_index);

// k nearest source points for every query row, ascending distance, ties by
// ascending index. Self-matches are included when a query coincides with a
// source point.
NeighborIndex knn_indices(const PointSet& source, const Mat& queries, int k);

// Point i is boundary iff among its k_b nearest neighbors (excluding itself)
// some point carries a different instance label.
BoundaryMask extract_boundary_set(const PointSet& points,
                                  const std::vector<int>& instance_labels,
                                  int k_b);

namespace reference {

// Serial oracles, written independently of the OpenMP kernels above and
// linked only by tests and the benchmark.
std::vector<int> farthest_point_sample(const PointSet& points, int m, int start_index);
NeighborIndex knn_indices(const PointSet& source, const Mat& queries, int k);
BoundaryMask extract_boundary_set(const PointSet& points,
                                  const std::vector<int>& instance_labels,
                                  int k_b);

}  // namespace reference

}  // namespace toothseg
