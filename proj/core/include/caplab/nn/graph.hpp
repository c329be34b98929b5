#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace caplab::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// A named dense-matrix parameter. Values live here; gradients live in the
// Graph instances that reference the parameter, so independent graphs can
// compute contributions in parallel and be reduced in a fixed order.
struct Param {
  std::string name;
  Mat value;
  bool trainable = true;

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
  Eigen::Index size() const { return value.size(); }
};

// Reverse-mode autodiff over Eigen::MatrixXd. Nodes are appended in
// construction order (a valid topological order), so backward() is a
// single reverse sweep. Build one Graph per forward pass and discard it.
class Graph {
 public:
  // ---- leaves ----
  int input(Mat v);                 // constant, no gradient
  int param(Param& p);              // gradient accumulated per-parameter

  // ---- arithmetic ----
  int matmul(int a, int b);
  int add(int a, int b);            // same shape
  int sub(int a, int b);
  int scale(int a, double s);
  int mul_scalar(int a, int s);     // s is a 1x1 node
  int cmul(int a, int b);           // elementwise
  int add_rowvec(int a, int v);     // v: 1 x cols, broadcast over rows
  int cmul_rowvec(int a, int v);
  int relu(int a);

  // ---- shape ----
  int transpose(int a);
  int slice_rows(int a, int r0, int n);
  int slice_cols(int a, int c0, int n);
  int hstack(const std::vector<int>& xs);
  int vstack(const std::vector<int>& xs);

  // ---- rowwise nonlinearities ----
  // Softmax over each row; `mask` (same shape, may contain -inf) is added
  // to the argument first. Entries masked with -inf get exactly zero
  // probability.
  int softmax_rows(int a, const Mat* mask = nullptr);
  int log_softmax_rows(int a);
  int layer_norm_rows(int a, double eps = 1e-5);  // no affine; compose with cmul_rowvec/add_rowvec
  int l2_normalize_rows(int a, double eps = 1e-12);

  // ---- reductions / selections ----
  int mean_rows_weighted(int a, const Vec& w);     // (w^T a)/sum(w), 1 x cols
  int gather_rows(Param& table, std::vector<int> idx);
  // Column vector of log softmax(row_t)[targets[t]].
  int picked_log_probs(int logits, std::vector<int> targets);
  int sum_all(int a);                              // 1x1
  // Scalar sum_k coefs[k] * xs[k]; every xs[k] must be 1x1.
  int combine(const std::vector<int>& xs, const Vec& coefs);
  // Mean cross-entropy over rows with integer targets: mean_i(-log softmax(row_i)[t_i]).
  int cross_entropy_rows(int logits, const std::vector<int>& targets);

  // ---- access ----
  const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  double scalar(int id) const;

  // Runs the reverse sweep from a 1x1 root node.
  void backward(int root);

  // Per-parameter gradient contributions of this graph (after backward).
  const std::map<Param*, Mat>& param_grads() const { return param_grads_; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;  // lazily sized on first accumulation
    bool needs_grad = false;
    std::function<void()> back;  // may be empty (leaves)
  };

  int emit(Mat value, bool needs_grad, std::function<void()> back);
  Mat& grad_buf(int id);
  bool has_grad(int id) const;
  bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  void check_id(int id) const;

  std::vector<Node> nodes_;
  std::map<Param*, Mat> param_grads_;
};

// Central-difference gradient checker used by tests: returns the maximum
// relative error between analytic gradients (via `grad_of`) and central
// finite differences of `loss_fn` over the given parameter entries.
double finite_difference_max_rel_error(
    Param& p, const std::function<double()>& loss_fn,
    const std::function<Mat()>& grad_of, double step = 1e-5);

}  // namespace caplab::nn
