#pragma once

#include <vector>

#include "toothseg/config.hpp"
#include "toothseg/types.hpp"

namespace toothseg {

struct WeightedEdge {
  int p = 0;
  int q = 0;
  double w = 0.0;  // in [0, 1]
};

struct PottsProblem {
  Mat unary;  // N x (C+1) assignment costs
  std::vector<WeightedEdge> edges;
  double smoothing_lambda = 2.0;

  int num_points() const { return static_cast<int>(unary.rows()); }
  int num_labels() const { return static_cast<int>(unary.cols()); }
};

struct Labeling {
  std::vector<int> labels;
};

// U_p(c) = -log(P(p, c) + eps).
Mat unary_costs(const Mat& probs, double eps = 1e-5);

// Symmetrized k-NN edges; w = (1 - d)(1 + nsim)/2 with d the edge length
// over the longest edge in the graph and nsim the normal cosine similarity.
std::vector<WeightedEdge> build_graph(const PointSet& points, int k = 8);

double energy(const Labeling& labeling, const PottsProblem& problem);

Labeling argmin_unary(const Mat& unary);

// Alpha-expansion sweeps (each move a binary min-cut) until no sweep lowers
// the energy; "icm" falls back to coordinate descent. Deterministic for the
// fixed ascending sweep order.
Labeling minimize_energy(const PottsProblem& problem, const Labeling& init,
                         const std::string& optimizer = "expansion");
Labeling minimize_energy(const PottsProblem& problem,
                         const std::string& optimizer = "expansion");

}  // namespace toothseg
