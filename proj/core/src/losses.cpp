#include "mvclust/losses.hpp"

namespace mvclust {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr double kNormFloor = 1e-12;

void require_views(std::size_t count, const char* what) {
  if (count < 2) throw ShapeError(std::string(what) + ": need at least 2 views");
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch");
  }
}

void require_row_stochastic(const Matrix& m, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (m.row(i).minCoeff() < -1e-9 || std::abs(m.row(i).sum() - 1.0) > 1e-6) {
      throw NumericError(std::string(what) + ": row " + std::to_string(i) +
                         " is not a probability distribution");
    }
  }
}

void require_nonzero_rows(const Matrix& m, const char* what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (m.row(i).norm() < kNormFloor) {
      throw NumericError(std::string(what) + ": zero-norm row " + std::to_string(i));
    }
  }
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out.row(i) = m.row(i) / std::max(m.row(i).norm(), kNormFloor);
  }
  return out;
}

double safe_log(double x) { return std::log(std::max(x, kProbFloor)); }

Matrix softmax_rows(const Matrix& m) {
  Matrix s = m;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
  return s;
}

/// One ordered-pair term of the symmetric cross-entropy loss: anchors in
/// `a`, positives in `b`, negatives from both. The m=n same-view term is
/// excluded unless include_self.
double contrastive_pair(const Matrix& a, const Matrix& b, double tau, bool include_self) {
  const Eigen::Index n = a.rows();
  const Matrix an = normalize_rows(a);
  const Matrix bn = normalize_rows(b);
  const Matrix same = ((an * an.transpose()) / tau).array().exp();
  const Matrix cross = ((an * bn.transpose()) / tau).array().exp();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double denom = cross.row(i).sum() + same.row(i).sum();
    if (!include_self) denom -= same(i, i);
    acc += -std::log(std::max(cross(i, i), kProbFloor) / std::max(denom, kProbFloor));
  }
  return acc / (2.0 * static_cast<double>(n));
}

}  // namespace

double cosine_similarity(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na < kNormFloor || nb < kNormFloor) {
    throw NumericError("cosine_similarity: zero-norm vector");
  }
  return a.dot(b) / (na * nb);
}

double reconstruction_loss(const std::vector<Matrix>& x_views,
                           const std::vector<Matrix>& xhat_views, Reduction reduction) {
  if (x_views.size() != xhat_views.size()) {
    throw ShapeError("reconstruction_loss: view count mismatch");
  }
  if (x_views.empty()) throw ShapeError("reconstruction_loss: no views");
  double acc = 0.0;
  for (std::size_t v = 0; v < x_views.size(); ++v) {
    require_same_shape(x_views[v], xhat_views[v], "reconstruction_loss");
    acc += (x_views[v] - xhat_views[v]).squaredNorm();
  }
  if (reduction == Reduction::batch_mean) {
    acc /= static_cast<double>(x_views.front().rows());
  }
  return acc;
}

double entropy_regularizer(const std::vector<Matrix>& y_views) {
  if (y_views.empty()) throw ShapeError("entropy_regularizer: no views");
  double h = 0.0;
  for (const Matrix& y : y_views) {
    require_row_stochastic(y, "entropy_regularizer");
    const Eigen::RowVectorXd mean = y.colwise().mean();
    for (Eigen::Index j = 0; j < mean.size(); ++j) {
      h -= mean(j) * safe_log(mean(j));
    }
  }
  return h;
}

double student_contrastive_loss(const std::vector<Matrix>& y_views, double tau_s,
                                ContrastiveOptions opts) {
  require_views(y_views.size(), "student_contrastive_loss");
  if (!(tau_s > 0)) throw ConfigError("student_contrastive_loss: tau_s must be > 0");
  if (y_views.front().rows() < 2) {
    throw ShapeError("student_contrastive_loss: need N >= 2 for negatives");
  }
  for (const Matrix& y : y_views) {
    require_same_shape(y, y_views.front(), "student_contrastive_loss");
    require_nonzero_rows(y, "student_contrastive_loss");
  }
  double loss = 0.0;
  for (std::size_t v = 0; v < y_views.size(); ++v) {
    for (std::size_t w = 0; w < y_views.size(); ++w) {
      if (v == w) continue;
      loss += contrastive_pair(y_views[v], y_views[w], tau_s, opts.include_self_negatives);
    }
  }
  if (opts.include_entropy) loss -= entropy_regularizer(y_views);
  return loss;
}

double teacher_contrastive_loss(const std::vector<Matrix>& t_views, double tau_t,
                                bool include_self_negatives) {
  require_views(t_views.size(), "teacher_contrastive_loss");
  if (!(tau_t > 0)) throw ConfigError("teacher_contrastive_loss: tau_t must be > 0");
  if (t_views.front().rows() < 2) {
    throw ShapeError("teacher_contrastive_loss: need N >= 2 for negatives");
  }
  for (const Matrix& t : t_views) {
    require_same_shape(t, t_views.front(), "teacher_contrastive_loss");
    require_nonzero_rows(t, "teacher_contrastive_loss");
  }
  double loss = 0.0;
  for (std::size_t v = 0; v < t_views.size(); ++v) {
    for (std::size_t w = 0; w < t_views.size(); ++w) {
      if (v == w) continue;
      loss += contrastive_pair(t_views[v], t_views[w], tau_t, include_self_negatives);
    }
  }
  return loss;
}

Matrix iic_joint(const Matrix& pa, const Matrix& pb) {
  if (pa.cols() != pb.cols() || pa.rows() != pb.rows()) {
    throw ShapeError("iic_joint: shape mismatch");
  }
  require_row_stochastic(pa, "iic_joint");
  require_row_stochastic(pb, "iic_joint");
  Matrix joint = (pa.transpose() * pb) / static_cast<double>(pa.rows());
  joint = 0.5 * (joint + joint.transpose()).eval();
  joint /= joint.sum();
  return joint;
}

namespace {
double mi_of_joint(const Matrix& joint) {
  const Vector row_marginal = joint.rowwise().sum();
  const Eigen::RowVectorXd col_marginal = joint.colwise().sum();
  double mi = 0.0;
  for (Eigen::Index i = 0; i < joint.rows(); ++i) {
    for (Eigen::Index j = 0; j < joint.cols(); ++j) {
      const double p = joint(i, j);
      if (p > kProbFloor) {
        mi += p * (safe_log(p) - safe_log(row_marginal(i) * col_marginal(j)));
      }
    }
  }
  return mi;
}
}  // namespace

double iic_mi_loss(const std::vector<Matrix>& z_views) {
  require_views(z_views.size(), "iic_mi_loss");
  if (z_views.front().cols() < 2) {
    throw ConfigError("iic_mi_loss: need at least 2 latent dimensions");
  }
  std::vector<Matrix> dists;
  dists.reserve(z_views.size());
  for (const Matrix& z : z_views) {
    require_same_shape(z, z_views.front(), "iic_mi_loss");
    dists.push_back(softmax_rows(z));
  }
  double loss = 0.0;
  for (std::size_t v = 0; v < dists.size(); ++v) {
    for (std::size_t w = v + 1; w < dists.size(); ++w) {
      loss -= mi_of_joint(iic_joint(dists[v], dists[w]));
    }
  }
  return loss;
}

double self_distillation_loss(const std::vector<Matrix>& dark_views,
                              const std::vector<Matrix>& y_views, double tau_d,
                              const Vector& u) {
  if (dark_views.size() != y_views.size()) {
    throw ShapeError("self_distillation_loss: view count mismatch");
  }
  if (dark_views.empty()) throw ShapeError("self_distillation_loss: no views");
  if (tau_d < 0 || tau_d >= 1) throw ConfigError("self_distillation_loss: tau_d in [0,1)");
  double loss = 0.0;
  for (std::size_t v = 0; v < dark_views.size(); ++v) {
    const Matrix& dark = dark_views[v];
    const Matrix& y = y_views[v];
    require_same_shape(dark, y, "self_distillation_loss");
    if (u.size() != dark.cols()) throw ShapeError("self_distillation_loss: u length mismatch");
    require_row_stochastic(dark, "self_distillation_loss");
    require_row_stochastic(y, "self_distillation_loss");
    double view_acc = 0.0;
    for (Eigen::Index i = 0; i < dark.rows(); ++i) {
      for (Eigen::Index j = 0; j < dark.cols(); ++j) {
        const double q = (1.0 - tau_d) * dark(i, j) + tau_d * u(j);
        if (q > kProbFloor) {
          view_acc += q * (safe_log(q) - safe_log(y(i, j)));
        }
      }
    }
    loss += view_acc / static_cast<double>(dark.rows());
  }
  return loss;
}

// ---- taped builders ---------------------------------------------------------

namespace graph {

namespace {

ad::Value entropy_of_view(ad::Value y) {
  ad::Value p = ad::col_mean(y);
  return ad::scale(ad::sum(ad::hadamard(p, ad::log_floored(p, kProbFloor))), -1.0);
}

ad::Value contrastive_pair(ad::Value a, ad::Value b, double tau, bool include_self) {
  const Eigen::Index n = a.val().rows();
  ad::Value an = ad::row_normalize(a, kNormFloor);
  ad::Value bn = ad::row_normalize(b, kNormFloor);
  ad::Value same = ad::exp(ad::scale(ad::matmul(an, ad::transpose(an)), 1.0 / tau));
  ad::Value cross = ad::exp(ad::scale(ad::matmul(an, ad::transpose(bn)), 1.0 / tau));
  if (!include_self) {
    Matrix off_diag = Matrix::Ones(n, n) - Matrix::Identity(n, n);
    same = ad::mask(same, off_diag);
  }
  // Row sums via multiplication with a ones column.
  ad::Tape& t = *a.tape();
  ad::Value ones = t.constant(Matrix::Ones(n, 1));
  ad::Value denom = ad::add(ad::matmul(same, ones), ad::matmul(cross, ones));
  ad::Value numer = ad::mask(cross, Matrix::Identity(n, n));
  ad::Value numer_col = ad::matmul(numer, ones);
  ad::Value per_anchor = ad::sub(ad::log_floored(denom, kProbFloor),
                                 ad::log_floored(numer_col, kProbFloor));
  return ad::scale(ad::sum(per_anchor), 1.0 / (2.0 * static_cast<double>(n)));
}

}  // namespace

ad::Value reconstruction_loss(const std::vector<ad::Value>& x_views,
                              const std::vector<ad::Value>& xhat_views,
                              Reduction reduction) {
  ad::Value acc;
  for (std::size_t v = 0; v < x_views.size(); ++v) {
    ad::Value diff = ad::sub(x_views[v], xhat_views[v]);
    ad::Value sq = ad::sum(ad::hadamard(diff, diff));
    acc = acc.valid() ? ad::add(acc, sq) : sq;
  }
  if (reduction == Reduction::batch_mean) {
    acc = ad::scale(acc, 1.0 / static_cast<double>(x_views.front().val().rows()));
  }
  return acc;
}

ad::Value entropy_regularizer(const std::vector<ad::Value>& y_views) {
  ad::Value acc;
  for (const ad::Value& y : y_views) {
    ad::Value h = entropy_of_view(y);
    acc = acc.valid() ? ad::add(acc, h) : h;
  }
  return acc;
}

ad::Value student_contrastive_loss(const std::vector<ad::Value>& y_views, double tau_s,
                                   ContrastiveOptions opts) {
  ad::Value acc;
  for (std::size_t v = 0; v < y_views.size(); ++v) {
    for (std::size_t w = 0; w < y_views.size(); ++w) {
      if (v == w) continue;
      ad::Value term =
          contrastive_pair(y_views[v], y_views[w], tau_s, opts.include_self_negatives);
      acc = acc.valid() ? ad::add(acc, term) : term;
    }
  }
  if (opts.include_entropy) acc = ad::sub(acc, entropy_regularizer(y_views));
  return acc;
}

ad::Value teacher_contrastive_loss(const std::vector<ad::Value>& t_views, double tau_t,
                                   bool include_self_negatives) {
  ad::Value acc;
  for (std::size_t v = 0; v < t_views.size(); ++v) {
    for (std::size_t w = 0; w < t_views.size(); ++w) {
      if (v == w) continue;
      ad::Value term = contrastive_pair(t_views[v], t_views[w], tau_t, include_self_negatives);
      acc = acc.valid() ? ad::add(acc, term) : term;
    }
  }
  return acc;
}

ad::Value iic_mi_loss(const std::vector<ad::Value>& z_views) {
  ad::Tape& t = *z_views.front().tape();
  const double n = static_cast<double>(z_views.front().val().rows());
  std::vector<ad::Value> dists;
  dists.reserve(z_views.size());
  for (const ad::Value& z : z_views) dists.push_back(ad::row_softmax(z));

  ad::Value acc;
  for (std::size_t v = 0; v < dists.size(); ++v) {
    for (std::size_t w = v + 1; w < dists.size(); ++w) {
      ad::Value joint = ad::scale(ad::matmul(ad::transpose(dists[v]), dists[w]), 1.0 / n);
      joint = ad::scale(ad::add(joint, ad::transpose(joint)), 0.5);
      joint = ad::div_scalar(joint, ad::sum(joint));
      const Eigen::Index d = joint.val().rows();
      ad::Value ones_col = t.constant(Matrix::Ones(d, 1));
      ad::Value ones_row = t.constant(Matrix::Ones(1, d));
      ad::Value row_marginal = ad::matmul(joint, ones_col);   // d x 1
      ad::Value col_marginal = ad::matmul(ones_row, joint);   // 1 x d
      ad::Value outer = ad::matmul(row_marginal, col_marginal);
      ad::Value mi = ad::sum(ad::hadamard(
          joint, ad::sub(ad::log_floored(joint, kProbFloor),
                         ad::log_floored(outer, kProbFloor))));
      acc = acc.valid() ? ad::sub(acc, mi) : ad::scale(mi, -1.0);
    }
  }
  return acc;
}

ad::Value self_distillation_loss(ad::Tape& tape, const std::vector<Matrix>& dark_views,
                                 const std::vector<ad::Value>& y_views, double tau_d,
                                 const Vector& u, bool literal_sign) {
  ad::Value acc;
  for (std::size_t v = 0; v < dark_views.size(); ++v) {
    const Matrix& dark = dark_views[v];
    Matrix target = (1.0 - tau_d) * dark;
    target.rowwise() += (tau_d * u).transpose();
    const double inv_n = 1.0 / static_cast<double>(dark.rows());
    Matrix target_logs = target.cwiseMax(kProbFloor).array().log().matrix();

    ad::Value q = tape.constant(target);
    ad::Value q_log_q = tape.constant(target.cwiseProduct(target_logs));
    ad::Value cross = ad::hadamard(q, ad::log_floored(y_views[v], kProbFloor));
    ad::Value kl = ad::scale(ad::sum(ad::sub(q_log_q, cross)), inv_n);
    acc = acc.valid() ? ad::add(acc, kl) : kl;
  }
  if (literal_sign) acc = ad::scale(acc, -1.0);
  return acc;
}

}  // namespace graph

}  // namespace mvclust
