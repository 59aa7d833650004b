#include "toothseg/autodiff.hpp"

#include <array>
#include <cmath>

namespace toothseg::ad {

void Tape::backward(Node* root) {
  if (root->val.rows() != 1 || root->val.cols() != 1)
    throw PreconditionError("Tape::backward: root must be scalar");
  root->g()(0, 0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node* n = it->get();
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
}

Node* add(Tape& t, Node* a, Node* b) {
  return t.make(a->val + b->val, any_grad({a, b}), [a, b](Node& out) {
    if (a->requires_grad) a->g() += out.grad;
    if (b->requires_grad) b->g() += out.grad;
  });
}

Node* sub(Tape& t, Node* a, Node* b) {
  return t.make(a->val - b->val, any_grad({a, b}), [a, b](Node& out) {
    if (a->requires_grad) a->g() += out.grad;
    if (b->requires_grad) b->g() -= out.grad;
  });
}

Node* mul(Tape& t, Node* a, Node* b) {
  return t.make(a->val.cwiseProduct(b->val), any_grad({a, b}), [a, b](Node& out) {
    if (a->requires_grad) a->g() += out.grad.cwiseProduct(b->val);
    if (b->requires_grad) b->g() += out.grad.cwiseProduct(a->val);
  });
}

Node* scale(Tape& t, Node* a, double s) {
  return t.make(a->val * s, a->requires_grad, [a, s](Node& out) {
    a->g() += s * out.grad;
  });
}

Node* add_const(Tape& t, Node* a, double c) {
  return t.make(a->val.array() + c, a->requires_grad, [a](Node& out) {
    a->g() += out.grad;
  });
}

Node* const_minus(Tape& t, double c, Node* a) {
  return t.make(c - a->val.array(), a->requires_grad, [a](Node& out) {
    a->g() -= out.grad;
  });
}

Node* clamp_min(Tape& t, Node* a, double floor) {
  return t.make(a->val.cwiseMax(floor), a->requires_grad, [a, floor](Node& out) {
    a->g() += out.grad.cwiseProduct(
        (a->val.array() > floor).cast<double>().matrix());
  });
}

Node* relu(Tape& t, Node* a) {
  return t.make(a->val.cwiseMax(0.0), a->requires_grad, [a](Node& out) {
    a->g() += out.grad.cwiseProduct((a->val.array() > 0.0).cast<double>().matrix());
  });
}

Node* sigmoid(Tape& t, Node* a) {
  Mat s = (1.0 / (1.0 + (-a->val.array()).exp())).matrix();
  Node* n = t.make(std::move(s), a->requires_grad, [a](Node& out) {
    a->g() += out.grad.cwiseProduct(
        out.val.cwiseProduct((1.0 - out.val.array()).matrix()));
  });
  return n;
}

Node* pointwise_div(Tape& t, Node* a, Node* b) {
  return t.make(a->val.cwiseQuotient(b->val), any_grad({a, b}), [a, b](Node& out) {
    if (a->requires_grad) a->g() += out.grad.cwiseQuotient(b->val);
    if (b->requires_grad)
      b->g() -= out.grad.cwiseProduct(out.val).cwiseQuotient(b->val);
  });
}

Node* matmul(Tape& t, Node* a, Node* b) {
  return t.make(a->val * b->val, any_grad({a, b}), [a, b](Node& out) {
    if (a->requires_grad) a->g() += out.grad * b->val.transpose();
    if (b->requires_grad) b->g() += a->val.transpose() * out.grad;
  });
}

Node* matmul_nt(Tape& t, Node* a, Node* b) {
  return t.make(a->val * b->val.transpose(), any_grad({a, b}), [a, b](Node& out) {
    if (a->requires_grad) a->g() += out.grad * b->val;
    if (b->requires_grad) b->g() += out.grad.transpose() * a->val;
  });
}

Node* matmul_tn(Tape& t, Node* a, Node* b) {
  return t.make(a->val.transpose() * b->val, any_grad({a, b}), [a, b](Node& out) {
    if (a->requires_grad) a->g() += b->val * out.grad.transpose();
    if (b->requires_grad) b->g() += a->val * out.grad;
  });
}

Node* add_row_broadcast(Tape& t, Node* a, Node* row) {
  Mat v = a->val;
  v.rowwise() += row->val.row(0);
  return t.make(std::move(v), any_grad({a, row}), [a, row](Node& out) {
    if (a->requires_grad) a->g() += out.grad;
    if (row->requires_grad) row->g() += out.grad.colwise().sum();
  });
}

Node* mul_col_broadcast(Tape& t, Node* a, Node* col) {
  Mat v = a->val.array().colwise() * col->val.col(0).array();
  return t.make(std::move(v), any_grad({a, col}), [a, col](Node& out) {
    if (a->requires_grad)
      a->g() += (out.grad.array().colwise() * col->val.col(0).array()).matrix();
    if (col->requires_grad)
      col->g() += out.grad.cwiseProduct(a->val).rowwise().sum();
  });
}

Node* div_col_broadcast(Tape& t, Node* a, Node* col) {
  Mat v = a->val.array().colwise() / col->val.col(0).array();
  return t.make(std::move(v), any_grad({a, col}), [a, col](Node& out) {
    if (a->requires_grad)
      a->g() += (out.grad.array().colwise() / col->val.col(0).array()).matrix();
    if (col->requires_grad)
      col->g() -= (out.grad.cwiseProduct(out.val).rowwise().sum().array() /
                   col->val.col(0).array())
                      .matrix();
  });
}

Node* concat_cols(Tape& t, const std::vector<Node*>& parts) {
  int cols = 0;
  for (Node* p : parts) cols += static_cast<int>(p->val.cols());
  const int rows = static_cast<int>(parts.front()->val.rows());
  Mat v(rows, cols);
  int off = 0;
  bool req = false;
  for (Node* p : parts) {
    v.middleCols(off, p->val.cols()) = p->val;
    off += static_cast<int>(p->val.cols());
    req = req || p->requires_grad;
  }
  std::vector<Node*> ps = parts;
  return t.make(std::move(v), req, [ps](Node& out) {
    int off = 0;
    for (Node* p : ps) {
      const int c = static_cast<int>(p->val.cols());
      if (p->requires_grad) p->g() += out.grad.middleCols(off, c);
      off += c;
    }
  });
}

Node* slice_cols(Tape& t, Node* a, int start, int count) {
  return t.make(a->val.middleCols(start, count), a->requires_grad,
                [a, start, count](Node& out) {
                  a->g().middleCols(start, count) += out.grad;
                });
}

Node* slice_row(Tape& t, Node* a, int row) {
  return t.make(a->val.row(row), a->requires_grad, [a, row](Node& out) {
    a->g().row(row) += out.grad;
  });
}

Node* sum(Tape& t, Node* a) {
  Mat v(1, 1);
  v(0, 0) = a->val.sum();
  return t.make(std::move(v), a->requires_grad, [a](Node& out) {
    a->g().array() += out.grad(0, 0);
  });
}

Node* row_sum(Tape& t, Node* a) {
  Mat v = a->val.rowwise().sum();
  return t.make(std::move(v), a->requires_grad, [a](Node& out) {
    a->g().colwise() += out.grad.col(0);
  });
}

Node* row_max(Tape& t, Node* a) {
  const int n = static_cast<int>(a->val.rows());
  Mat v(n, 1);
  auto arg = std::make_shared<std::vector<int>>(n);
  for (int i = 0; i < n; ++i) {
    int j;
    v(i, 0) = a->val.row(i).maxCoeff(&j);
    (*arg)[i] = j;
  }
  return t.make(std::move(v), a->requires_grad, [a, arg](Node& out) {
    Mat& g = a->g();
    for (int i = 0; i < out.grad.rows(); ++i) g(i, (*arg)[i]) += out.grad(i, 0);
  });
}

Node* colwise_max(Tape& t, Node* a) {
  const int c = static_cast<int>(a->val.cols());
  Mat v(1, c);
  auto arg = std::make_shared<std::vector<int>>(c);
  for (int j = 0; j < c; ++j) {
    int i;
    v(0, j) = a->val.col(j).maxCoeff(&i);
    (*arg)[j] = i;
  }
  return t.make(std::move(v), a->requires_grad, [a, arg](Node& out) {
    Mat& g = a->g();
    for (int j = 0; j < out.grad.cols(); ++j) g((*arg)[j], j) += out.grad(0, j);
  });
}

Node* repeat_row(Tape& t, Node* row, int n) {
  Mat v = row->val.row(0).replicate(n, 1);
  return t.make(std::move(v), row->requires_grad, [row](Node& out) {
    row->g() += out.grad.colwise().sum();
  });
}

Node* softmax_rows(Tape& t, Node* a) {
  Mat v = a->val;
  for (int i = 0; i < v.rows(); ++i) {
    Eigen::ArrayXd r = v.row(i).array();
    r -= r.maxCoeff();
    r = r.exp();
    v.row(i) = (r / r.sum()).matrix();
  }
  return t.make(std::move(v), a->requires_grad, [a](Node& out) {
    Mat& g = a->g();
    for (int i = 0; i < out.val.rows(); ++i) {
      const double dot = out.grad.row(i).dot(out.val.row(i));
      g.row(i) += (out.grad.row(i).array() - dot).matrix().cwiseProduct(out.val.row(i));
    }
  });
}

Node* gather_rows(Tape& t, Node* a, const std::vector<int>& idx) {
  Mat v(static_cast<int>(idx.size()), a->val.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) v.row(r) = a->val.row(idx[r]);
  auto ix = std::make_shared<std::vector<int>>(idx);
  return t.make(std::move(v), a->requires_grad, [a, ix](Node& out) {
    // Serial scatter keeps the accumulation order deterministic.
    Mat& g = a->g();
    for (std::size_t r = 0; r < ix->size(); ++r) g.row((*ix)[r]) += out.grad.row(r);
  });
}

Node* group_max_rows(Tape& t, Node* a, int group_size) {
  const int rows = static_cast<int>(a->val.rows());
  const int cols = static_cast<int>(a->val.cols());
  if (group_size < 1 || rows % group_size != 0)
    throw PreconditionError("group_max_rows: rows must divide by group size");
  const int groups = rows / group_size;
  Mat v(groups, cols);
  auto arg = std::make_shared<IMat>(groups, cols);
#pragma omp parallel for
  for (int g = 0; g < groups; ++g) {
    for (int c = 0; c < cols; ++c) {
      int best = g * group_size;
      double bv = a->val(best, c);
      for (int r = 1; r < group_size; ++r) {
        const double x = a->val(g * group_size + r, c);
        if (x > bv) {
          bv = x;
          best = g * group_size + r;
        }
      }
      v(g, c) = bv;
      (*arg)(g, c) = best;
    }
  }
  return t.make(std::move(v), a->requires_grad, [a, arg](Node& out) {
    Mat& g = a->g();
    for (int i = 0; i < out.grad.rows(); ++i)
      for (int c = 0; c < out.grad.cols(); ++c) g((*arg)(i, c), c) += out.grad(i, c);
  });
}

Node* interpolate_rows(Tape& t, Node* a, const std::vector<std::array<int, 3>>& idx,
                       const std::vector<std::array<double, 3>>& w) {
  const int n = static_cast<int>(idx.size());
  Mat v = Mat::Zero(n, a->val.cols());
#pragma omp parallel for
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j)
      if (idx[i][j] >= 0) v.row(i) += w[i][j] * a->val.row(idx[i][j]);
  auto ix = std::make_shared<std::vector<std::array<int, 3>>>(idx);
  auto wt = std::make_shared<std::vector<std::array<double, 3>>>(w);
  return t.make(std::move(v), a->requires_grad, [a, ix, wt](Node& out) {
    Mat& g = a->g();
    for (std::size_t i = 0; i < ix->size(); ++i)
      for (int j = 0; j < 3; ++j)
        if ((*ix)[i][j] >= 0) g.row((*ix)[i][j]) += (*wt)[i][j] * out.grad.row(i);
  });
}

Node* geometric_affine(Tape& t, Node* groups, int group_size, Node* alpha,
                       Node* beta, double eps, bool per_channel_sigma) {
  const int rows = static_cast<int>(groups->val.rows());
  const int cols = static_cast<int>(groups->val.cols());
  if (group_size < 1 || rows % group_size != 0)
    throw PreconditionError("geometric_affine: rows must divide by group size");
  if (alpha->val.cols() != cols || beta->val.cols() != cols)
    throw PreconditionError("geometric_affine: alpha/beta channel mismatch");
  if (!groups->val.allFinite())
    throw PreconditionError("geometric_affine: non-finite input");
  const int ng = rows / group_size;
  const int k = group_size;

  // Memoized per-group statistics for the backward pass.
  auto mu = std::make_shared<Mat>(ng, cols);
  auto sig = std::make_shared<Mat>(ng, per_channel_sigma ? cols : 1);
  Mat centered(rows, cols);
  Mat out(rows, cols);

#pragma omp parallel for
  for (int g = 0; g < ng; ++g) {
    auto block = groups->val.middleRows(g * k, k);
    mu->row(g) = block.colwise().mean();
    auto cblock = centered.middleRows(g * k, k);
    cblock = block.rowwise() - mu->row(g);
    if (per_channel_sigma) {
      for (int c = 0; c < cols; ++c)
        (*sig)(g, c) = std::sqrt(cblock.col(c).squaredNorm() / k);
      out.middleRows(g * k, k) =
          cblock.array().rowwise() / (sig->row(g).array() + eps);
    } else {
      (*sig)(g, 0) = std::sqrt(cblock.squaredNorm() / (k * cols));
      out.middleRows(g * k, k) = cblock / ((*sig)(g, 0) + eps);
    }
  }
  auto hval = std::make_shared<Mat>(out);  // normalized features before scale/shift
  out = out.array().rowwise() * alpha->val.row(0).array();
  out = out.array().rowwise() + beta->val.row(0).array();

  auto cen = std::make_shared<Mat>(std::move(centered));
  bool req = any_grad({groups, alpha, beta});
  return t.make(std::move(out), req,
                [groups, alpha, beta, mu, sig, hval, cen, k, ng, cols, eps,
                 per_channel_sigma](Node& o) {
    if (beta->requires_grad) beta->g() += o.grad.colwise().sum();
    if (alpha->requires_grad)
      alpha->g() += o.grad.cwiseProduct(*hval).colwise().sum();
    if (!groups->requires_grad) return;
    Mat& gf = groups->g();
    for (int g = 0; g < ng; ++g) {
      Mat gh = o.grad.middleRows(g * k, k).array().rowwise() *
               alpha->val.row(0).array();
      const auto d = cen->middleRows(g * k, k);
      Mat gd(k, cols);
      if (per_channel_sigma) {
        for (int c = 0; c < cols; ++c) {
          const double s = (*sig)(g, c);
          gd.col(c) = gh.col(c) / (s + eps);
          if (s > 0.0) {
            const double dot = gh.col(c).dot(d.col(c));
            gd.col(c) -= d.col(c) * (dot / ((s + eps) * (s + eps) * k * s));
          }
        }
      } else {
        const double s = (*sig)(g, 0);
        gd = gh / (s + eps);
        if (s > 0.0) {
          const double dot = gh.cwiseProduct(d).sum();
          gd -= d * (dot / ((s + eps) * (s + eps) * k * cols * s));
        }
      }
      gf.middleRows(g * k, k) += gd.rowwise() - gd.colwise().mean();
    }
  });
}

Node* boundary_focal_loss(Tape& t, Node* probs, const std::vector<int>& labels,
                          const std::vector<char>& boundary, double gamma,
                          double prob_floor) {
  const int n = static_cast<int>(probs->val.rows());
  if (static_cast<int>(labels.size()) != n || static_cast<int>(boundary.size()) != n)
    throw PreconditionError("boundary_focal_loss: length mismatch");
  if (gamma < 0.0) throw PreconditionError("boundary_focal_loss: gamma >= 0");

  int nb = 0;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!boundary[i]) continue;
    ++nb;
    const double p = probs->val(i, labels[i]);
    const double pc = std::max(p, prob_floor);
    acc += std::pow(std::max(1.0 - p, 0.0), gamma) * (-std::log(pc));
  }
  Mat v(1, 1);
  v(0, 0) = nb == 0 ? 0.0 : acc / nb;

  auto lab = std::make_shared<std::vector<int>>(labels);
  auto bnd = std::make_shared<std::vector<char>>(boundary);
  return t.make(std::move(v), probs->requires_grad && nb > 0,
                [probs, lab, bnd, gamma, prob_floor, nb](Node& out) {
    const double go = out.grad(0, 0) / nb;
    Mat& g = probs->g();
    for (std::size_t i = 0; i < lab->size(); ++i) {
      if (!(*bnd)[i]) continue;
      const double p = probs->val(i, (*lab)[i]);
      const double pc = std::max(p, prob_floor);
      const double base = std::max(1.0 - p, 0.0);
      double df = 0.0;
      if (gamma > 0.0) df += gamma * std::pow(base, gamma - 1.0) * std::log(pc);
      if (p > prob_floor) df -= std::pow(base, gamma) / p;
      g(i, (*lab)[i]) += go * df;
    }
  });
}

Node* bce_with_logits_mean(Tape& t, Node* logits, const Vec& targets) {
  const int n = static_cast<int>(logits->val.size());
  if (static_cast<int>(targets.size()) != n)
    throw PreconditionError("bce_with_logits_mean: length mismatch");
  double acc = 0.0;
  const double* l = logits->val.data();
  for (int i = 0; i < n; ++i) {
    acc += std::max(l[i], 0.0) - l[i] * targets(i) + std::log1p(std::exp(-std::abs(l[i])));
  }
  Mat v(1, 1);
  v(0, 0) = acc / n;
  auto y = std::make_shared<Vec>(targets);
  return t.make(std::move(v), logits->requires_grad, [logits, y, n](Node& out) {
    const double go = out.grad(0, 0) / n;
    Mat& g = logits->g();
    const double* l = logits->val.data();
    double* gd = g.data();
    for (int i = 0; i < n; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-l[i]));
      gd[i] += go * (s - (*y)(i));
    }
  });
}

Node* weighted_ce_mean(Tape& t, Node* logits, const std::vector<int>& targets,
                       const std::vector<double>& weights) {
  const int m = static_cast<int>(logits->val.rows());
  if (static_cast<int>(targets.size()) != m || static_cast<int>(weights.size()) != m)
    throw PreconditionError("weighted_ce_mean: length mismatch");
  double wsum = 0.0, acc = 0.0;
  for (int i = 0; i < m; ++i) {
    const auto row = logits->val.row(i);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    acc += weights[i] * (lse - row(targets[i]));
    wsum += weights[i];
  }
  Mat v(1, 1);
  v(0, 0) = m == 0 ? 0.0 : acc / wsum;
  auto tg = std::make_shared<std::vector<int>>(targets);
  auto wt = std::make_shared<std::vector<double>>(weights);
  return t.make(std::move(v), logits->requires_grad && m > 0,
                [logits, tg, wt, wsum](Node& out) {
    const double go = out.grad(0, 0) / wsum;
    Mat& g = logits->g();
    for (int i = 0; i < logits->val.rows(); ++i) {
      const auto row = logits->val.row(i);
      const double mx = row.maxCoeff();
      Eigen::ArrayXd sm = (row.array() - mx).exp();
      sm /= sm.sum();
      g.row(i) += (go * (*wt)[i]) * sm.matrix().transpose();
      g(i, (*tg)[i]) -= go * (*wt)[i];
    }
  });
}

}  // namespace toothseg::ad
