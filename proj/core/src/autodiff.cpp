#include "mvclust/autodiff.hpp"

namespace mvclust::ad {

namespace {
Matrix zero_like(const Matrix& m) { return Matrix::Zero(m.rows(), m.cols()); }

void check_same_tape(Value a, Value b) {
  if (a.tape() != b.tape()) throw Error("autodiff: operands from different tapes");
}
}  // namespace

const Matrix& Value::val() const { return tape_->value_of(id_); }
const Matrix& Value::grad() const { return tape_->grad_of(id_); }

Value Tape::constant(Matrix m) {
  return emplace(std::move(m), nullptr, {});
}

Value Tape::scalar(double s) {
  Matrix m(1, 1);
  m(0, 0) = s;
  return constant(std::move(m));
}

Value Tape::emplace(Matrix value, std::function<void(Tape&, const Matrix&)> backward,
                    std::vector<int> parents) {
  Node n;
  n.value = std::move(value);
  n.backward = std::move(backward);
  n.parents = std::move(parents);
  nodes_.push_back(std::move(n));
  return Value(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

const Matrix& Tape::grad_of(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    static thread_local Matrix zero;
    zero = zero_like(n.value);
    return zero;
  }
  return n.grad;
}

void Tape::backward(Value root) {
  if (root.tape() != this) throw Error("autodiff: root from a different tape");
  if (root.val().size() != 1) throw Error("autodiff: backward root must be scalar");
  Matrix seed(1, 1);
  seed(0, 0) = 1.0;
  accumulate(root.id(), seed);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.grad);
  }
}

Value add(Value a, Value b) {
  check_same_tape(a, b);
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.emplace(a.val() + b.val(),
                   [ia, ib](Tape& t, const Matrix& g) {
                     t.accumulate(ia, g);
                     t.accumulate(ib, g);
                   },
                   {ia, ib});
}

Value sub(Value a, Value b) {
  check_same_tape(a, b);
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.emplace(a.val() - b.val(),
                   [ia, ib](Tape& t, const Matrix& g) {
                     t.accumulate(ia, g);
                     t.accumulate(ib, Matrix(-g));
                   },
                   {ia, ib});
}

Value hadamard(Value a, Value b) {
  check_same_tape(a, b);
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.emplace(a.val().cwiseProduct(b.val()),
                   [ia, ib](Tape& t, const Matrix& g) {
                     t.accumulate(ia, g.cwiseProduct(t.value_of(ib)));
                     t.accumulate(ib, g.cwiseProduct(t.value_of(ia)));
                   },
                   {ia, ib});
}

Value scale(Value a, double c) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.emplace(c * a.val(),
                   [ia, c](Tape& t, const Matrix& g) { t.accumulate(ia, Matrix(c * g)); },
                   {ia});
}

Value matmul(Value a, Value b) {
  check_same_tape(a, b);
  if (a.val().cols() != b.val().rows()) throw ShapeError("matmul: inner dimensions differ");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.emplace(a.val() * b.val(),
                   [ia, ib](Tape& t, const Matrix& g) {
                     t.accumulate(ia, Matrix(g * t.value_of(ib).transpose()));
                     t.accumulate(ib, Matrix(t.value_of(ia).transpose() * g));
                   },
                   {ia, ib});
}

Value transpose(Value a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.emplace(a.val().transpose(),
                   [ia](Tape& t, const Matrix& g) { t.accumulate(ia, Matrix(g.transpose())); },
                   {ia});
}

Value relu(Value a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  return t.emplace(a.val().cwiseMax(0.0),
                   [ia](Tape& t, const Matrix& g) {
                     const Matrix& x = t.value_of(ia);
                     t.accumulate(ia, Matrix(g.cwiseProduct(
                                          (x.array() > 0.0).cast<double>().matrix())));
                   },
                   {ia});
}

Value exp(Value a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  Matrix e = a.val().array().exp().matrix();
  const int self = static_cast<int>(t.size());
  return t.emplace(std::move(e),
                   [ia, self](Tape& t, const Matrix& g) {
                     t.accumulate(ia, Matrix(g.cwiseProduct(t.value_of(self))));
                   },
                   {ia});
}

Value log_floored(Value a, double floor) {
  Tape& t = *a.tape();
  const int ia = a.id();
  Matrix y = a.val().cwiseMax(floor).array().log().matrix();
  return t.emplace(std::move(y),
                   [ia, floor](Tape& t, const Matrix& g) {
                     const Matrix& x = t.value_of(ia);
                     Matrix gx = (x.array() > floor)
                                     .select(g.array() / x.array(), 0.0)
                                     .matrix();
                     t.accumulate(ia, gx);
                   },
                   {ia});
}

Value row_softmax(Value a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  Matrix s = a.val();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - m).exp();
    s.row(i) /= s.row(i).sum();
  }
  const int self = static_cast<int>(t.size());
  return t.emplace(std::move(s),
                   [ia, self](Tape& t, const Matrix& g) {
                     const Matrix& s = t.value_of(self);
                     Matrix gx(s.rows(), s.cols());
                     for (Eigen::Index i = 0; i < s.rows(); ++i) {
                       const double dot = g.row(i).dot(s.row(i));
                       gx.row(i) = (g.row(i).array() - dot) * s.row(i).array();
                     }
                     t.accumulate(ia, gx);
                   },
                   {ia});
}

Value row_normalize(Value a, double floor) {
  Tape& t = *a.tape();
  const int ia = a.id();
  const Matrix& x = a.val();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    y.row(i) = x.row(i) / std::max(x.row(i).norm(), floor);
  }
  const int self = static_cast<int>(t.size());
  return t.emplace(std::move(y),
                   [ia, self, floor](Tape& t, const Matrix& g) {
                     const Matrix& x = t.value_of(ia);
                     const Matrix& y = t.value_of(self);
                     Matrix gx(x.rows(), x.cols());
                     for (Eigen::Index i = 0; i < x.rows(); ++i) {
                       const double norm = x.row(i).norm();
                       if (norm > floor) {
                         const double dot = g.row(i).dot(y.row(i));
                         gx.row(i) = (g.row(i) - dot * y.row(i)) / norm;
                       } else {
                         gx.row(i) = g.row(i) / floor;
                       }
                     }
                     t.accumulate(ia, gx);
                   },
                   {ia});
}

Value sum(Value a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  Matrix s(1, 1);
  s(0, 0) = a.val().sum();
  return t.emplace(std::move(s),
                   [ia](Tape& t, const Matrix& g) {
                     const Matrix& x = t.value_of(ia);
                     t.accumulate(ia, Matrix(Matrix::Constant(x.rows(), x.cols(), g(0, 0))));
                   },
                   {ia});
}

Value col_mean(Value a) {
  Tape& t = *a.tape();
  const int ia = a.id();
  const double inv_n = 1.0 / static_cast<double>(a.val().rows());
  Matrix m = a.val().colwise().mean();
  return t.emplace(std::move(m),
                   [ia, inv_n](Tape& t, const Matrix& g) {
                     const Matrix& x = t.value_of(ia);
                     Matrix gx = Matrix::Ones(x.rows(), 1) * (inv_n * g);
                     t.accumulate(ia, gx);
                   },
                   {ia});
}

Value mask(Value a, const Matrix& m) {
  if (a.val().rows() != m.rows() || a.val().cols() != m.cols()) {
    throw ShapeError("mask: shape mismatch");
  }
  Tape& t = *a.tape();
  const int ia = a.id();
  Matrix mk = m;
  return t.emplace(a.val().cwiseProduct(mk),
                   [ia, mk](Tape& t, const Matrix& g) {
                     t.accumulate(ia, Matrix(g.cwiseProduct(mk)));
                   },
                   {ia});
}

Value div_scalar(Value a, Value s) {
  check_same_tape(a, s);
  if (s.val().size() != 1) throw ShapeError("div_scalar: divisor must be 1x1");
  Tape& t = *a.tape();
  const int ia = a.id(), is = s.id();
  const double d = s.val()(0, 0);
  return t.emplace(a.val() / d,
                   [ia, is](Tape& t, const Matrix& g) {
                     const double d = t.value_of(is)(0, 0);
                     t.accumulate(ia, Matrix(g / d));
                     Matrix gs(1, 1);
                     gs(0, 0) = -(g.cwiseProduct(t.value_of(ia)).sum()) / (d * d);
                     t.accumulate(is, gs);
                   },
                   {ia, is});
}

Value add_row_vector(Value x, Value b) {
  check_same_tape(x, b);
  if (b.val().rows() != 1 || b.val().cols() != x.val().cols()) {
    throw ShapeError("add_row_vector: bias must be 1 x cols");
  }
  Tape& t = *x.tape();
  const int ix = x.id(), ib = b.id();
  Matrix y = x.val().rowwise() + b.val().row(0);
  return t.emplace(std::move(y),
                   [ix, ib](Tape& t, const Matrix& g) {
                     t.accumulate(ix, g);
                     t.accumulate(ib, Matrix(g.colwise().sum()));
                   },
                   {ix, ib});
}

}  // namespace mvclust::ad
