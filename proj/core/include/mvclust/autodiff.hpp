#pragma once

#include <functional>
#include <vector>

#include "mvclust/common.hpp"

namespace mvclust::ad {

class Tape;

/// Handle to a matrix-valued node on a tape. Scalars are 1x1 matrices.
class Value {
 public:
  Value() = default;
  Value(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& val() const;
  const Matrix& grad() const;
  double scalar() const { return val()(0, 0); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape over dense Eigen matrices. Nodes are created in
/// topological order; backward() walks them in reverse, accumulating
/// gradients into every node reachable from the root. A tape is built per
/// training step and discarded.
class Tape {
 public:
  Value constant(Matrix m);
  Value scalar(double s);

  void backward(Value root);

  const Matrix& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Matrix& grad_of(int id) const;
  std::size_t size() const { return nodes_.size(); }

  // Internal: used by the op constructors below.
  Value emplace(Matrix value, std::function<void(Tape&, const Matrix&)> backward,
                std::vector<int> parents);
  void accumulate(int id, const Matrix& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // lazily sized on first accumulation
    std::function<void(Tape&, const Matrix&)> backward;
    std::vector<int> parents;
  };
  std::vector<Node> nodes_;
};

// Elementwise / structural ops.
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value hadamard(Value a, Value b);
Value scale(Value a, double c);
Value matmul(Value a, Value b);
Value transpose(Value a);
Value relu(Value a);
Value exp(Value a);

/// log(max(x, floor)); gradient is zero in the floored region.
Value log_floored(Value a, double floor = 1e-12);

/// Row-wise softmax.
Value row_softmax(Value a);

/// Rows rescaled to unit L2 norm; norms below `floor` divide by `floor`.
Value row_normalize(Value a, double floor = 1e-12);

/// Sum of all entries -> 1x1.
Value sum(Value a);

/// Column means -> 1 x cols.
Value col_mean(Value a);

/// Elementwise product with a constant mask (no gradient into the mask).
Value mask(Value a, const Matrix& m);

/// Divide every entry by a 1x1 scalar node.
Value div_scalar(Value a, Value s);

/// X + 1*b where b is a 1 x cols bias row.
Value add_row_vector(Value x, Value b);

}  // namespace mvclust::ad
