#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "snip/errors.hpp"
#include "snip/rng.hpp"

namespace snip {

enum class Activation { relu, gelu };

std::string shape_str(const std::vector<int>& shape);

// Dense row-major tensor of doubles. A Tensor is a cheap handle onto shared
// storage: copies alias the same data, which is what lets a Graph accumulate
// gradients into the same parameter a caller holds.
class Tensor {
 public:
  Tensor() : p_(std::make_shared<Payload>()) {}
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0,
                      double mean = 0.0);

  const std::vector<int>& shape() const { return p_->shape; }
  int size() const { return static_cast<int>(p_->data.size()); }
  int ndim() const { return static_cast<int>(p_->shape.size()); }
  int rows() const;  // leading dimension of a matrix (1 for vectors)
  int cols() const;  // trailing dimension

  std::vector<double>& data() { return p_->data; }
  const std::vector<double>& data() const { return p_->data; }
  double& operator[](int i) { return p_->data[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return p_->data[static_cast<std::size_t>(i)]; }
  double at(int r, int c) const { return p_->data[static_cast<std::size_t>(r) * cols() + c]; }
  double& at(int r, int c) { return p_->data[static_cast<std::size_t>(r) * cols() + c]; }

  bool has_grad() const { return !p_->grad.empty(); }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();
  void drop_grad() { p_->grad.clear(); }

  // Identity of this tensor inside the graph that recorded it; -1 for leaves
  // never produced by an op.
  int node_id() const { return p_->node_id; }
  bool same_storage(const Tensor& o) const { return p_ == o.p_; }
  const void* storage_key() const { return p_.get(); }

  Tensor clone() const { return Tensor(p_->shape, p_->data); }
  double value() const;  // scalar tensors only
  double max_abs() const;
  // Max |x| over the leading `row_limit` rows (gate responses ignore padding).
  double max_abs_rows(int row_limit) const;

 private:
  struct Payload {
    std::vector<int> shape{};
    std::vector<double> data{};
    std::vector<double> grad{};
    int node_id = -1;
  };
  std::shared_ptr<Payload> p_;
  friend class Graph;
};

// Reverse-mode tape. Ops append nodes in execution order; backward() replays
// the tape in exact reverse insertion order, so gradients are deterministic.
// A Graph is confined to one thread.
class Graph {
 public:
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor add_row(const Tensor& a, const Tensor& bias);  // bias broadcast over rows
  Tensor scale(const Tensor& a, double c);
  Tensor add_const(const Tensor& a, double c);
  Tensor relu(const Tensor& a);
  Tensor gelu(const Tensor& a);  // exact Gaussian-CDF form
  Tensor tanh(const Tensor& a);
  Tensor abs(const Tensor& a);
  Tensor activation(const Tensor& a, Activation kind);
  Tensor softmax_rows(const Tensor& a);
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    double eps);
  Tensor sum_all(const Tensor& a);
  Tensor max_all(const Tensor& a);  // gradient flows to the first argmax only
  Tensor slice_rows(const Tensor& a, int r0, int r1);
  Tensor concat_rows(const std::vector<Tensor>& parts);
  Tensor rows_from(const Tensor& table, const std::vector<int>& ids);
  Tensor mul_scalar(const Tensor& a, const Tensor& s);  // s is a 1-element tensor
  Tensor dropout(const Tensor& a, double rate, Rng& rng);
  Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

  // Populates grad buffers of every tensor this graph touched.
  void backward(const Tensor& loss);

  std::size_t num_nodes() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    std::function<void()> back;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> touched_;
  std::unordered_set<const void*> touched_keys_;

  void track(const Tensor& t);
  Tensor make_output(std::vector<int> shape);
  void push(std::function<void()> back) { nodes_.push_back({std::move(back)}); }
  int next_id_ = 0;
};

double gelu_value(double x);
double gelu_derivative(double x);

// Max over coordinates of |analytic - central difference| / (|analytic| + 1e-8)
// for a scalar-valued function of x. The function receives a fresh Graph and
// must record its computation on it.
using ScalarFn = std::function<Tensor(Graph&, const Tensor&)>;
double finite_diff_check(const ScalarFn& f, Tensor x, double h);

}  // namespace snip
