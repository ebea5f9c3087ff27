#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "relgt/common.hpp"
#include "relgt/rng.hpp"

namespace relgt {

// Dense row-major f64 matrix. Vectors are 1 x n, scalars 1 x 1.
struct Tensor {
  int64_t r = 0;
  int64_t c = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int64_t rows, int64_t cols) : r(rows), c(cols), data(static_cast<size_t>(rows * cols), 0.0) {}

  static Tensor zeros(int64_t rows, int64_t cols) { return Tensor(rows, cols); }
  static Tensor full(int64_t rows, int64_t cols, double v) {
    Tensor t(rows, cols);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return full(1, 1, v); }
  static Tensor row(std::span<const double> v) {
    Tensor t(1, static_cast<int64_t>(v.size()));
    std::copy(v.begin(), v.end(), t.data.begin());
    return t;
  }
  static Tensor from_rows(int64_t rows, int64_t cols, std::span<const double> v) {
    RELGT_CHECK(static_cast<int64_t>(v.size()) == rows * cols, "from_rows size mismatch");
    Tensor t(rows, cols);
    std::copy(v.begin(), v.end(), t.data.begin());
    return t;
  }

  int64_t numel() const { return r * c; }
  double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * c + j)]; }
  double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * c + j)]; }
  bool same_shape(const Tensor& o) const { return r == o.r && c == o.c; }
  std::string shape_str() const;
  bool all_finite() const;
};

Tensor matmul_value(const Tensor& a, const Tensor& b);

// Named learnable tensors plus their gradient and Adam state.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
  };

  int add(const std::string& name, Tensor init);
  int index_of(const std::string& name) const;  // -1 if absent
  Entry& entry(int slot) { return entries_[slot]; }
  const Entry& entry(int slot) const { return entries_[slot]; }
  size_t size() const { return entries_.size(); }

  void zero_grad();
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  int64_t step_count() const { return step_; }

  void save(const std::string& path) const;  // "RGT1" checkpoint
  void load(const std::string& path);        // strict: names and shapes must match

 private:
  std::vector<Entry> entries_;
  int64_t step_ = 0;
};

// Reverse-mode tape. One tape per forward pass, confined to one thread.
class Tape {
 public:
  using Var = int32_t;

  Var constant(Tensor v) { return make_leaf(std::move(v), false, -1); }
  Var leaf(Tensor v, bool requires_grad) { return make_leaf(std::move(v), requires_grad, -1); }
  // Snapshot of the parameter's current value; gradients accumulated on this
  // tape flow back to the store slot via accumulate_param_grads.
  Var param(const ParamStore& store, int slot) {
    return make_leaf(store.entry(slot).value, true, slot);
  }

  const Tensor& val(Var v) const { return nodes_[v].value; }
  const Tensor& grad_of(Var v) const { return nodes_[v].grad; }
  size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);                  // same shape
  Var add_rowvec(Var a, Var bias);        // bias 1 x C broadcast over rows
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                  // elementwise
  Var scale(Var a, double s);
  Var scale_by(Var a, Var s);             // s is 1 x 1
  Var concat_cols(std::span<const Var> xs);
  Var slice_rows(Var a, int64_t begin, int64_t end);
  Var slice_cols(Var a, int64_t begin, int64_t end);
  Var transpose(Var a);
  Var relu(Var a);
  Var softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
  Var dropout(Var a, double p, Rng& rng, bool train);
  Var mean_rows(Var a);                   // R x C -> 1 x C
  Var sum_all(Var a);                     // -> 1 x 1
  Var lookup_rows(Var table, std::vector<int64_t> idx);

  // out[term.out_row] += term.scale * inputs[term.input][term.row]  — the
  // workhorse behind the per-column feature encoder.
  struct GatherTerm {
    int32_t out_row;
    int32_t input;   // index into `inputs`
    int64_t row;     // row inside that input
    double scale;
  };
  Var gather_scaled_rows(std::span<const Var> inputs, int64_t out_rows, int64_t d,
                         std::vector<GatherTerm> terms);

  Var bce_with_logits(Var logit, double target);  // scalar
  Var l1_loss(Var pred, double target);           // scalar

  void backward(Var loss);
  // store.grad[slot] += scale * tape_grad for every param leaf on this tape
  void accumulate_param_grads(ParamStore& store, double scale = 1.0) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    int param_slot = -1;
    std::function<void(Tape&)> backprop;
  };

  Var make_leaf(Tensor v, bool requires_grad, int slot);
  Var make_node(Tensor v, bool requires_grad, std::function<void(Tape&)> backprop);
  Tensor& g(Var v) { return nodes_[v].grad; }
  bool rg(Var v) const { return nodes_[v].requires_grad; }

  std::vector<Node> nodes_;
};

// Central-difference verification of reverse-mode gradients.
// `build` must be deterministic and read parameter values through tape.param.
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_coord = -1;
};

GradCheckReport grad_check(ParamStore& params,
                           const std::function<Tape::Var(Tape&)>& build, double h = 1e-5);

}  // namespace relgt
