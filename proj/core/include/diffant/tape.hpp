#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "diffant/params.hpp"
#include "diffant/rng.hpp"

namespace diffant {

// Handle into a Tape; cheap to copy.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over dense double matrices. One tape records one
// forward pass; backward() walks the recorded ops in reverse. Inference uses
// the same graph builders and simply never calls backward().
class Tape {
public:
  Tape() = default;
  // Read-only binding: forward passes work, backward() refuses to touch params.
  explicit Tape(const ParamStore& params) : ro_(&params) {}
  explicit Tape(ParamStore& params) : ro_(&params), rw_(&params) {}

  // leaves
  Var constant(Eigen::MatrixXd v);
  Var leaf(Eigen::MatrixXd v);  // like constant, but receives a gradient (for grad checks)
  Var param(int store_index);   // gradient accumulates into the bound ParamStore

  // elementwise / structural
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double factor);
  Var cwise_mul(Var a, Var b);
  Var add_rowvec(Var m, Var row);  // broadcast a 1 x C row over every row of m
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);
  Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
  Var relu(Var a);
  Var exp(Var a);
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);
  // Inverted dropout; identity when rate == 0 or training == false.
  Var dropout(Var a, double rate, RngStream* rng, bool training);

  // reductions (all return 1 x 1)
  Var sum_all(Var a);
  Var mse(Var a, Var b);  // mean over all entries of (a - b)^2
  // mean over entries of rows with weight > 0, each row scaled by its weight
  Var weighted_row_mse(Var a, const Eigen::MatrixXd& target, const Eigen::VectorXd& row_weights);
  Var cross_entropy_rows(Var logits, const std::vector<int>& labels);
  Var binary_ce_logits(Var logits, const Eigen::MatrixXd& targets);
  // mean over (rows-1) x cols of min(|delta|, tau)^2, delta = row differences
  Var clipped_delta_sq(Var log_probs, double tau);
  Var weighted_sum(const std::vector<Var>& terms, const std::vector<double>& coeffs);

  const Eigen::MatrixXd& value(Var v) const;
  double scalar(Var v) const;
  // Gradient of the last backward() root w.r.t. a leaf() node.
  const Eigen::MatrixXd& grad(Var v);

  void backward(Var root);  // root must be 1 x 1

  std::size_t node_count() const { return nodes_.size(); }

private:
  struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;  // allocated lazily during backward
    bool wants_grad = false;
    bool has_grad = false;
    int param = -1;
    std::function<void(Tape&, int)> backward;
  };

  int push(Eigen::MatrixXd value, bool wants_grad);
  void accum(int id, const Eigen::MatrixXd& g);
  Node& node(Var v);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  const ParamStore* ro_ = nullptr;
  ParamStore* rw_ = nullptr;
};

}  // namespace diffant
