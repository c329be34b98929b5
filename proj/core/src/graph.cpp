#include "caplab/nn/graph.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace caplab::nn {

namespace {

Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& x) {
  const double m = x.maxCoeff();
  Eigen::RowVectorXd e = (x.array() - m).exp();
  return e / e.sum();
}

}  // namespace

void Graph::check_id(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw std::logic_error("graph: invalid node id");
  }
}

int Graph::emit(Mat value, bool needs_grad, std::function<void()> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size() - 1);
}

Mat& Graph::grad_buf(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

bool Graph::has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad.size() != 0; }

double Graph::scalar(int id) const {
  check_id(id);
  const Mat& v = value(id);
  if (v.size() != 1) throw std::logic_error("graph: node is not scalar");
  return v(0, 0);
}

int Graph::input(Mat v) { return emit(std::move(v), false, nullptr); }

int Graph::param(Param& p) {
  const int id = emit(p.value, p.trainable, nullptr);
  if (p.trainable) {
    Param* pp = &p;
    nodes_.back().back = [this, id, pp] {
      auto it = param_grads_.find(pp);
      if (it == param_grads_.end()) {
        it = param_grads_.emplace(pp, Mat::Zero(pp->rows(), pp->cols())).first;
      }
      it->second += grad_buf(id);
    };
  }
  return id;
}

int Graph::matmul(int a, int b) {
  check_id(a);
  check_id(b);
  if (value(a).cols() != value(b).rows()) throw std::logic_error("matmul: shape mismatch");
  const int id = emit(value(a) * value(b), needs(a) || needs(b), nullptr);
  nodes_.back().back = [this, id, a, b] {
    const Mat& g = grad_buf(id);
    if (needs(a)) grad_buf(a).noalias() += g * value(b).transpose();
    if (needs(b)) grad_buf(b).noalias() += value(a).transpose() * g;
  };
  return id;
}

int Graph::add(int a, int b) {
  check_id(a);
  check_id(b);
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols()) {
    throw std::logic_error("add: shape mismatch");
  }
  const int id = emit(value(a) + value(b), needs(a) || needs(b), nullptr);
  nodes_.back().back = [this, id, a, b] {
    const Mat& g = grad_buf(id);
    if (needs(a)) grad_buf(a) += g;
    if (needs(b)) grad_buf(b) += g;
  };
  return id;
}

int Graph::sub(int a, int b) {
  check_id(a);
  check_id(b);
  const int id = emit(value(a) - value(b), needs(a) || needs(b), nullptr);
  nodes_.back().back = [this, id, a, b] {
    const Mat& g = grad_buf(id);
    if (needs(a)) grad_buf(a) += g;
    if (needs(b)) grad_buf(b) -= g;
  };
  return id;
}

int Graph::scale(int a, double s) {
  check_id(a);
  const int id = emit(value(a) * s, needs(a), nullptr);
  nodes_.back().back = [this, id, a, s] {
    if (needs(a)) grad_buf(a) += s * grad_buf(id);
  };
  return id;
}

int Graph::mul_scalar(int a, int s) {
  check_id(a);
  check_id(s);
  if (value(s).size() != 1) throw std::logic_error("mul_scalar: scalar node must be 1x1");
  const double sv = value(s)(0, 0);
  const int id = emit(value(a) * sv, needs(a) || needs(s), nullptr);
  nodes_.back().back = [this, id, a, s, sv] {
    const Mat& g = grad_buf(id);
    if (needs(a)) grad_buf(a) += sv * g;
    if (needs(s)) grad_buf(s)(0, 0) += (g.array() * value(a).array()).sum();
  };
  return id;
}

int Graph::cmul(int a, int b) {
  check_id(a);
  check_id(b);
  const int id = emit(value(a).cwiseProduct(value(b)), needs(a) || needs(b), nullptr);
  nodes_.back().back = [this, id, a, b] {
    const Mat& g = grad_buf(id);
    if (needs(a)) grad_buf(a) += g.cwiseProduct(value(b));
    if (needs(b)) grad_buf(b) += g.cwiseProduct(value(a));
  };
  return id;
}

int Graph::add_rowvec(int a, int v) {
  check_id(a);
  check_id(v);
  if (value(v).rows() != 1 || value(v).cols() != value(a).cols()) {
    throw std::logic_error("add_rowvec: v must be 1 x cols(a)");
  }
  Mat out = value(a);
  out.rowwise() += value(v).row(0);
  const int id = emit(std::move(out), needs(a) || needs(v), nullptr);
  nodes_.back().back = [this, id, a, v] {
    const Mat& g = grad_buf(id);
    if (needs(a)) grad_buf(a) += g;
    if (needs(v)) grad_buf(v) += g.colwise().sum();
  };
  return id;
}

int Graph::cmul_rowvec(int a, int v) {
  check_id(a);
  check_id(v);
  if (value(v).rows() != 1 || value(v).cols() != value(a).cols()) {
    throw std::logic_error("cmul_rowvec: v must be 1 x cols(a)");
  }
  Mat out = value(a).array().rowwise() * value(v).row(0).array();
  const int id = emit(std::move(out), needs(a) || needs(v), nullptr);
  nodes_.back().back = [this, id, a, v] {
    const Mat& g = grad_buf(id);
    if (needs(a)) grad_buf(a) += (g.array().rowwise() * value(v).row(0).array()).matrix();
    if (needs(v)) grad_buf(v) += (g.array() * value(a).array()).colwise().sum().matrix();
  };
  return id;
}

int Graph::relu(int a) {
  check_id(a);
  const int id = emit(value(a).cwiseMax(0.0), needs(a), nullptr);
  nodes_.back().back = [this, id, a] {
    if (!needs(a)) return;
    grad_buf(a) += grad_buf(id).cwiseProduct((value(a).array() > 0.0).cast<double>().matrix());
  };
  return id;
}

int Graph::transpose(int a) {
  check_id(a);
  const int id = emit(value(a).transpose(), needs(a), nullptr);
  nodes_.back().back = [this, id, a] {
    if (needs(a)) grad_buf(a) += grad_buf(id).transpose();
  };
  return id;
}

int Graph::slice_rows(int a, int r0, int n) {
  check_id(a);
  if (r0 < 0 || n < 0 || r0 + n > value(a).rows()) throw std::logic_error("slice_rows: out of range");
  const int id = emit(value(a).middleRows(r0, n), needs(a), nullptr);
  nodes_.back().back = [this, id, a, r0, n] {
    if (needs(a)) grad_buf(a).middleRows(r0, n) += grad_buf(id);
  };
  return id;
}

int Graph::slice_cols(int a, int c0, int n) {
  check_id(a);
  if (c0 < 0 || n < 0 || c0 + n > value(a).cols()) throw std::logic_error("slice_cols: out of range");
  const int id = emit(value(a).middleCols(c0, n), needs(a), nullptr);
  nodes_.back().back = [this, id, a, c0, n] {
    if (needs(a)) grad_buf(a).middleCols(c0, n) += grad_buf(id);
  };
  return id;
}

int Graph::hstack(const std::vector<int>& xs) {
  if (xs.empty()) throw std::logic_error("hstack: empty");
  Eigen::Index rows = value(xs[0]).rows(), cols = 0;
  bool ng = false;
  for (int x : xs) {
    check_id(x);
    if (value(x).rows() != rows) throw std::logic_error("hstack: row mismatch");
    cols += value(x).cols();
    ng = ng || needs(x);
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  for (int x : xs) {
    out.middleCols(c, value(x).cols()) = value(x);
    c += value(x).cols();
  }
  const int id = emit(std::move(out), ng, nullptr);
  std::vector<int> parts = xs;
  nodes_.back().back = [this, id, parts] {
    const Mat& g = grad_buf(id);
    Eigen::Index c = 0;
    for (int x : parts) {
      const Eigen::Index w = value(x).cols();
      if (needs(x)) grad_buf(x) += g.middleCols(c, w);
      c += w;
    }
  };
  return id;
}

int Graph::vstack(const std::vector<int>& xs) {
  if (xs.empty()) throw std::logic_error("vstack: empty");
  Eigen::Index cols = value(xs[0]).cols(), rows = 0;
  bool ng = false;
  for (int x : xs) {
    check_id(x);
    if (value(x).cols() != cols) throw std::logic_error("vstack: col mismatch");
    rows += value(x).rows();
    ng = ng || needs(x);
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (int x : xs) {
    out.middleRows(r, value(x).rows()) = value(x);
    r += value(x).rows();
  }
  const int id = emit(std::move(out), ng, nullptr);
  std::vector<int> parts = xs;
  nodes_.back().back = [this, id, parts] {
    const Mat& g = grad_buf(id);
    Eigen::Index r = 0;
    for (int x : parts) {
      const Eigen::Index h = value(x).rows();
      if (needs(x)) grad_buf(x) += g.middleRows(r, h);
      r += h;
    }
  };
  return id;
}

int Graph::softmax_rows(int a, const Mat* mask) {
  check_id(a);
  Mat z = value(a);
  if (mask) {
    if (mask->rows() != z.rows() || mask->cols() != z.cols()) {
      throw std::logic_error("softmax_rows: mask shape mismatch");
    }
    z += *mask;
  }
  Mat y(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    if (!std::isfinite(m)) throw std::logic_error("softmax_rows: fully masked row");
    Eigen::ArrayXd e = (z.row(i).array() - m).exp();
    y.row(i) = (e / e.sum()).matrix();
  }
  const int id = emit(std::move(y), needs(a), nullptr);
  nodes_.back().back = [this, id, a] {
    if (!needs(a)) return;
    const Mat& y = value(id);
    const Mat& g = grad_buf(id);
    Mat& ga = grad_buf(a);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double dot = g.row(i).dot(y.row(i));
      ga.row(i) += (g.row(i).array() - dot).matrix().cwiseProduct(y.row(i));
    }
  };
  return id;
}

int Graph::log_softmax_rows(int a) {
  check_id(a);
  const Mat& z = value(a);
  Mat y(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    if (!std::isfinite(m)) throw std::logic_error("log_softmax_rows: fully masked row");
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    y.row(i) = z.row(i).array() - lse;
  }
  const int id = emit(std::move(y), needs(a), nullptr);
  nodes_.back().back = [this, id, a] {
    if (!needs(a)) return;
    const Mat& y = value(id);
    const Mat& g = grad_buf(id);
    Mat& ga = grad_buf(a);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double gsum = g.row(i).sum();
      ga.row(i) += g.row(i) - gsum * y.row(i).array().exp().matrix();
    }
  };
  return id;
}

int Graph::layer_norm_rows(int a, double eps) {
  check_id(a);
  const Mat& x = value(a);
  const Eigen::Index d = x.cols();
  Mat y(x.rows(), d);
  Vec inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const Eigen::RowVectorXd c = x.row(i).array() - mu;
    const double var = c.squaredNorm() / static_cast<double>(d);
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    y.row(i) = c * inv_std(i);
  }
  const int id = emit(std::move(y), needs(a), nullptr);
  nodes_.back().back = [this, id, a, inv_std] {
    if (!needs(a)) return;
    const Mat& y = value(id);
    const Mat& g = grad_buf(id);
    Mat& ga = grad_buf(a);
    const double d = static_cast<double>(y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double gmean = g.row(i).mean();
      const double gydot = g.row(i).dot(y.row(i)) / d;
      ga.row(i) += inv_std(i) * (g.row(i).array() - gmean - y.row(i).array() * gydot).matrix();
    }
  };
  return id;
}

int Graph::l2_normalize_rows(int a, double eps) {
  check_id(a);
  const Mat& x = value(a);
  Mat y(x.rows(), x.cols());
  Vec norms(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    norms(i) = x.row(i).norm();
    y.row(i) = x.row(i) / (norms(i) + eps);
  }
  const int id = emit(std::move(y), needs(a), nullptr);
  nodes_.back().back = [this, id, a, norms, eps] {
    if (!needs(a)) return;
    const Mat& x = value(a);
    const Mat& g = grad_buf(id);
    Mat& ga = grad_buf(a);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double r = norms(i);
      const double re = r + eps;
      ga.row(i) += g.row(i) / re;
      if (r > 0.0) {
        const double xd = x.row(i).dot(g.row(i));
        ga.row(i) -= (xd / (r * re * re)) * x.row(i);
      }
    }
  };
  return id;
}

int Graph::mean_rows_weighted(int a, const Vec& w) {
  check_id(a);
  if (w.size() != value(a).rows()) throw std::logic_error("mean_rows_weighted: weight size");
  const double wsum = w.sum();
  if (wsum <= 0.0) throw std::logic_error("mean_rows_weighted: weights sum to zero");
  Mat out = (w.transpose() * value(a)) / wsum;
  const int id = emit(std::move(out), needs(a), nullptr);
  nodes_.back().back = [this, id, a, w, wsum] {
    if (!needs(a)) return;
    const Mat& g = grad_buf(id);
    Mat& ga = grad_buf(a);
    for (Eigen::Index i = 0; i < ga.rows(); ++i) {
      if (w(i) != 0.0) ga.row(i) += (w(i) / wsum) * g.row(0);
    }
  };
  return id;
}

int Graph::gather_rows(Param& table, std::vector<int> idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), table.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= table.rows()) throw std::logic_error("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(k)) = table.value.row(idx[k]);
  }
  const int id = emit(std::move(out), table.trainable, nullptr);
  if (table.trainable) {
    Param* pp = &table;
    nodes_.back().back = [this, id, pp, idx = std::move(idx)] {
      auto it = param_grads_.find(pp);
      if (it == param_grads_.end()) {
        it = param_grads_.emplace(pp, Mat::Zero(pp->rows(), pp->cols())).first;
      }
      const Mat& g = grad_buf(id);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        it->second.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
      }
    };
  }
  return id;
}

int Graph::picked_log_probs(int logits, std::vector<int> targets) {
  check_id(logits);
  const Mat& z = value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != z.rows()) {
    throw std::logic_error("picked_log_probs: target count mismatch");
  }
  Mat out(z.rows(), 1);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= z.cols()) throw std::logic_error("picked_log_probs: target out of range");
    const double m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    out(i, 0) = z(i, t) - lse;
  }
  const int id = emit(std::move(out), needs(logits), nullptr);
  nodes_.back().back = [this, id, logits, targets = std::move(targets)] {
    if (!needs(logits)) return;
    const Mat& z = value(logits);
    const Mat& g = grad_buf(id);
    Mat& ga = grad_buf(logits);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double gi = g(i, 0);
      if (gi == 0.0) continue;
      Eigen::RowVectorXd sm = softmax_row(z.row(i));
      ga.row(i) -= gi * sm;
      ga(i, targets[static_cast<std::size_t>(i)]) += gi;
    }
  };
  return id;
}

int Graph::sum_all(int a) {
  check_id(a);
  Mat out(1, 1);
  out(0, 0) = value(a).sum();
  const int id = emit(std::move(out), needs(a), nullptr);
  nodes_.back().back = [this, id, a] {
    if (needs(a)) grad_buf(a).array() += grad_buf(id)(0, 0);
  };
  return id;
}

int Graph::combine(const std::vector<int>& xs, const Vec& coefs) {
  if (xs.empty() || static_cast<Eigen::Index>(xs.size()) != coefs.size()) {
    throw std::logic_error("combine: size mismatch");
  }
  bool ng = false;
  double acc = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    check_id(xs[k]);
    if (value(xs[k]).size() != 1) throw std::logic_error("combine: inputs must be scalar");
    acc += coefs(static_cast<Eigen::Index>(k)) * value(xs[k])(0, 0);
    ng = ng || needs(xs[k]);
  }
  Mat out(1, 1);
  out(0, 0) = acc;
  const int id = emit(std::move(out), ng, nullptr);
  std::vector<int> parts = xs;
  Vec cs = coefs;
  nodes_.back().back = [this, id, parts, cs] {
    const double g = grad_buf(id)(0, 0);
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (needs(parts[k])) grad_buf(parts[k])(0, 0) += cs(static_cast<Eigen::Index>(k)) * g;
    }
  };
  return id;
}

int Graph::cross_entropy_rows(int logits, const std::vector<int>& targets) {
  const int picked = picked_log_probs(logits, targets);
  const int total = sum_all(picked);
  return scale(total, -1.0 / static_cast<double>(targets.size()));
}

void Graph::backward(int root) {
  check_id(root);
  if (value(root).size() != 1) throw std::logic_error("backward: root must be scalar");
  grad_buf(root)(0, 0) = 1.0;
  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0 || !n.back) continue;
    n.back();
  }
}

double finite_difference_max_rel_error(
    Param& p, const std::function<double()>& loss_fn,
    const std::function<Mat()>& grad_of, double step) {
  const Mat analytic = grad_of();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
      const double orig = p.value(i, j);
      p.value(i, j) = orig + step;
      const double lp = loss_fn();
      p.value(i, j) = orig - step;
      const double lm = loss_fn();
      p.value(i, j) = orig;
      const double fd = (lp - lm) / (2.0 * step);
      const double an = analytic(i, j);
      const double scale = std::max(std::abs(fd), std::abs(an));
      const double err = scale < 1e-8 ? std::abs(fd - an) : std::abs(fd - an) / scale;
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace caplab::nn
