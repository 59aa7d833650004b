#include "toothseg/graphcut.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "toothseg/geometry.hpp"

namespace toothseg {

Mat unary_costs(const Mat& probs, double eps) {
  if (eps <= 0.0) throw PreconditionError("unary_costs: eps must be > 0");
  if ((probs.array() < 0.0).any())
    throw PreconditionError("unary_costs: negative probabilities");
  return (-(probs.array() + eps).log()).matrix();
}

std::vector<WeightedEdge> build_graph(const PointSet& points, int k) {
  const int n = points.size();
  if (k < 1) throw PreconditionError("build_graph: k >= 1 required");
  std::vector<WeightedEdge> edges;
  if (n < 2) return edges;

  const int kk = std::min(k + 1, n);  // +1 absorbs the self match
  NeighborIndex nn = knn_indices(points, points.coords, kk);

  // Symmetrize: store each undirected pair once as (min, max).
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < kk; ++j) {
      const int other = nn.indices(i, j);
      if (other == i) continue;
      pairs.emplace_back(std::min(i, other), std::max(i, other));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  double max_len = 0.0;
  std::vector<double> lengths(pairs.size());
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    lengths[e] = (points.coords.row(pairs[e].first) -
                  points.coords.row(pairs[e].second)).norm();
    max_len = std::max(max_len, lengths[e]);
  }

  edges.reserve(pairs.size());
  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const double d = max_len > 0.0 ? lengths[e] / max_len : 0.0;
    const double nsim = points.normals.row(pairs[e].first)
                            .dot(points.normals.row(pairs[e].second));
    const double w = std::clamp((1.0 - d) * (1.0 + nsim) / 2.0, 0.0, 1.0);
    edges.push_back({pairs[e].first, pairs[e].second, w});
  }
  return edges;
}

double energy(const Labeling& labeling, const PottsProblem& problem) {
  const int n = problem.num_points();
  if (static_cast<int>(labeling.labels.size()) != n)
    throw PreconditionError("energy: labeling length mismatch");
  double e = 0.0;
  for (int i = 0; i < n; ++i) {
    const int l = labeling.labels[i];
    if (l < 0 || l >= problem.num_labels())
      throw PreconditionError("energy: label out of range");
    e += problem.unary(i, l);
  }
  for (const auto& edge : problem.edges)
    if (labeling.labels[edge.p] != labeling.labels[edge.q])
      e += problem.smoothing_lambda * edge.w;
  return e;
}

Labeling argmin_unary(const Mat& unary) {
  Labeling out;
  out.labels.resize(unary.rows());
  for (int i = 0; i < unary.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < unary.cols(); ++c)
      if (unary(i, c) < unary(i, best)) best = c;
    out.labels[i] = best;
  }
  return out;
}

namespace {

// Dinic max-flow on an adjacency-array graph.
class MaxFlow {
 public:
  explicit MaxFlow(int n) : head_(n, -1), level_(n), iter_(n) {}

  void add_edge(int from, int to, double cap, double rev_cap = 0.0) {
    edges_.push_back({to, head_[from], cap});
    head_[from] = static_cast<int>(edges_.size()) - 1;
    edges_.push_back({from, head_[to], rev_cap});
    head_[to] = static_cast<int>(edges_.size()) - 1;
  }

  double solve(int s, int t) {
    double flow = 0.0;
    while (bfs(s, t)) {
      iter_ = head_;
      double f;
      while ((f = dfs(s, t, std::numeric_limits<double>::infinity())) > 0.0)
        flow += f;
    }
    return flow;
  }

  // After solve: true iff node is reachable from s in the residual graph.
  bool in_source_side(int node) const { return level_[node] >= 0; }

 private:
  struct Edge {
    int to;
    int next;
    double cap;
  };

  bool bfs(int s, int t) {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<int> q;
    level_[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int e = head_[u]; e != -1; e = edges_[e].next) {
        if (edges_[e].cap > kEps && level_[edges_[e].to] < 0) {
          level_[edges_[e].to] = level_[u] + 1;
          q.push(edges_[e].to);
        }
      }
    }
    return level_[t] >= 0;
  }

  double dfs(int u, int t, double limit) {
    if (u == t) return limit;
    for (int& e = iter_[u]; e != -1; e = edges_[e].next) {
      Edge& ed = edges_[e];
      if (ed.cap > kEps && level_[ed.to] == level_[u] + 1) {
        const double d = dfs(ed.to, t, std::min(limit, ed.cap));
        if (d > 0.0) {
          ed.cap -= d;
          edges_[e ^ 1].cap += d;
          return d;
        }
      }
    }
    return 0.0;
  }

  static constexpr double kEps = 1e-12;
  std::vector<Edge> edges_;
  std::vector<int> head_;
  std::vector<int> level_;
  std::vector<int> iter_;
};

// One expansion move for label alpha; x_p = 1 means p switches to alpha.
// Pairwise terms are submodular because the Potts distance is a metric.
bool expand_label(const PottsProblem& problem, int alpha, std::vector<int>& labels) {
  const int n = problem.num_points();
  const int s = n, t = n + 1;
  MaxFlow flow(n + 2);
  const double lam = problem.smoothing_lambda;

  std::vector<double> coeff(n, 0.0);  // coefficient of x_p
  for (int p = 0; p < n; ++p)
    coeff[p] = problem.unary(p, alpha) - problem.unary(p, labels[p]);

  for (const auto& e : problem.edges) {
    const double a = lam * e.w * (labels[e.p] != labels[e.q]);
    const double b = lam * e.w * (labels[e.p] != alpha);
    const double c = lam * e.w * (alpha != labels[e.q]);
    // E(xp,xq) = a + (d-b) xp + (b-a) xq + (b+c-a-d) xp(1-xq), d = 0
    coeff[e.p] += -b;
    coeff[e.q] += b - a;
    const double cap = b + c - a;
    if (cap > 0.0) flow.add_edge(e.q, e.p, cap);
  }

  for (int p = 0; p < n; ++p) {
    if (coeff[p] >= 0.0)
      flow.add_edge(s, p, coeff[p]);
    else
      flow.add_edge(p, t, -coeff[p]);
  }

  flow.solve(s, t);
  bool changed = false;
  for (int p = 0; p < n; ++p) {
    if (!flow.in_source_side(p) && labels[p] != alpha) {
      labels[p] = alpha;
      changed = true;
    }
  }
  return changed;
}

Labeling icm(const PottsProblem& problem, Labeling labeling) {
  const int n = problem.num_points();
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  for (const auto& e : problem.edges) {
    adj[e.p].emplace_back(e.q, e.w);
    adj[e.q].emplace_back(e.p, e.w);
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (int p = 0; p < n; ++p) {
      int best = labeling.labels[p];
      double best_cost = std::numeric_limits<double>::infinity();
      for (int c = 0; c < problem.num_labels(); ++c) {
        double cost = problem.unary(p, c);
        for (auto& [q, w] : adj[p])
          if (labeling.labels[q] != c) cost += problem.smoothing_lambda * w;
        if (cost < best_cost - 1e-15) {
          best_cost = cost;
          best = c;
        }
      }
      if (best != labeling.labels[p]) {
        labeling.labels[p] = best;
        changed = true;
      }
    }
  }
  return labeling;
}

}  // namespace

Labeling minimize_energy(const PottsProblem& problem, const Labeling& init,
                         const std::string& optimizer) {
  const int n = problem.num_points();
  if (static_cast<int>(init.labels.size()) != n)
    throw PreconditionError("minimize_energy: init length mismatch");
  if (problem.smoothing_lambda < 0.0)
    throw PreconditionError("minimize_energy: smoothing_lambda must be >= 0");
  for (const auto& e : problem.edges)
    if (e.p == e.q) throw PreconditionError("minimize_energy: self edge");

  if (optimizer == "icm") return icm(problem, init);
  if (optimizer != "expansion")
    throw PreconditionError("minimize_energy: unknown optimizer " + optimizer);

  Labeling current = init;
  double current_energy = energy(current, problem);
  bool improved = true;
  while (improved) {
    improved = false;
    for (int alpha = 0; alpha < problem.num_labels(); ++alpha) {
      std::vector<int> trial = current.labels;
      if (!expand_label(problem, alpha, trial)) continue;
      Labeling cand{std::move(trial)};
      const double e = energy(cand, problem);
      if (e > current_energy + 1e-9)
        throw std::logic_error("minimize_energy: expansion sweep increased energy");
      if (e < current_energy - 1e-12) {
        current = std::move(cand);
        current_energy = e;
        improved = true;
      }
    }
  }
  return current;
}

Labeling minimize_energy(const PottsProblem& problem, const std::string& optimizer) {
  return minimize_energy(problem, argmin_unary(problem.unary), optimizer);
}

}  // namespace toothseg
