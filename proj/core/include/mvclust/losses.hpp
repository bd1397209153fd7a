#pragma once

#include <vector>

#include "mvclust/autodiff.hpp"
#include "mvclust/common.hpp"

namespace mvclust {

/// Per-step objective components. `total` is the plain sum of whichever
/// components are active in the current stage; no weighting factors.
struct LossBreakdown {
  double rec = 0.0;
  double stu = 0.0;
  double tea = 0.0;
  double iic = 0.0;
  double self_distill = 0.0;
  double total = 0.0;
};

enum class Reduction { sum, batch_mean };

struct ContrastiveOptions {
  bool include_entropy = true;        // subtract H(Y) (student loss only)
  bool include_self_negatives = false;  // keep the m=n term in the same-view sum
};

// ---- plain (value-only) implementations ------------------------------------
// Pure functions of their matrix inputs; these validate and throw, and back
// every frozen numeric oracle in the tests.

double cosine_similarity(const Vector& a, const Vector& b);

double reconstruction_loss(const std::vector<Matrix>& x_views,
                           const std::vector<Matrix>& xhat_views,
                           Reduction reduction = Reduction::sum);

/// Sum over views of the entropy of the batch-mean cluster distribution.
double entropy_regularizer(const std::vector<Matrix>& y_views);

/// Symmetric cross-entropy over cosine similarities: per ordered view pair,
/// the matched sample is the positive and every other sample (same view and
/// cross view) is a negative. Minimizing this raises a lower bound on the
/// cross-view mutual information that grows with the negative count; the
/// bound itself is not assertable on finite batches and is not tested.
double student_contrastive_loss(const std::vector<Matrix>& y_views, double tau_s,
                                ContrastiveOptions opts = {});

/// Same structure on the teacher features, without the entropy term (a
/// regularizer would smooth the feature distribution the pseudo-labeling
/// stage depends on).
double teacher_contrastive_loss(const std::vector<Matrix>& t_views, double tau_t,
                                bool include_self_negatives = false);

/// Symmetrized, renormalized empirical joint (Pa^T Pb)/N.
Matrix iic_joint(const Matrix& pa, const Matrix& pb);

/// Negated mutual information summed over unordered view pairs; rows of each
/// latent matrix are softmax-normalized into distributions over the latent
/// dimensions first.
double iic_mi_loss(const std::vector<Matrix>& z_views);

/// Forward KL(q || y) with q = (1-tau_d)*dark + tau_d*u, mean over samples,
/// summed over views.
double self_distillation_loss(const std::vector<Matrix>& dark_views,
                              const std::vector<Matrix>& y_views, double tau_d,
                              const Vector& u);

// ---- taped graph builders ---------------------------------------------------
// Same formulas over tape nodes, used by the trainer; probability floors
// replace the hard input validation so a collapsing batch does not abort
// mid-step.

namespace graph {

ad::Value reconstruction_loss(const std::vector<ad::Value>& x_views,
                              const std::vector<ad::Value>& xhat_views,
                              Reduction reduction);
ad::Value entropy_regularizer(const std::vector<ad::Value>& y_views);
ad::Value student_contrastive_loss(const std::vector<ad::Value>& y_views, double tau_s,
                                   ContrastiveOptions opts = {});
ad::Value teacher_contrastive_loss(const std::vector<ad::Value>& t_views, double tau_t,
                                   bool include_self_negatives = false);
ad::Value iic_mi_loss(const std::vector<ad::Value>& z_views);
ad::Value self_distillation_loss(ad::Tape& tape, const std::vector<Matrix>& dark_views,
                                 const std::vector<ad::Value>& y_views, double tau_d,
                                 const Vector& u, bool literal_sign = false);

}  // namespace graph

}  // namespace mvclust
