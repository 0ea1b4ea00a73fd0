#pragma once

#include <optional>

#include "duedl/label_map.hpp"
#include "duedl/tensor.hpp"

namespace duedl {

enum class Reduction { mean, sum };   // over annotated pixels
enum class EclScope { all, unlabeled };

struct LossConfig {
  double beta = 10.0;
  double lambda_u = 0.3;
  double step = 0.0;  // annealing step t (epoch or iteration index)
  Reduction reduction = Reduction::mean;
  EclScope ecl_scope = EclScope::all;

  // min(1, t / beta). Throws ConfigError unless beta > 0 and t >= 0.
  double lambda_t() const;
};

// The three Dirichlet views a supervised evidential loss needs, all [K,H,W]
// except strength [H,W].
struct DirichletView {
  Tensor prob;
  Tensor strength;
  Tensor alpha;
};

// Sum over annotated pixels of sum_j (y_j - p_j)^2 + p_j (1 - p_j) / (S + 1).
Tensor partial_mse(const Tensor& prob, const Tensor& strength, const ScribbleMask& scribble,
                   Reduction reduction = Reduction::mean);

// KL(Dir(alpha_hat) || Dir(1)) over annotated pixels with the labelled class
// entry of alpha forced to 1.
Tensor partial_kl(const Tensor& alpha, const ScribbleMask& scribble,
                  Reduction reduction = Reduction::mean);

Tensor partial_edl(const DirichletView& view, const ScribbleMask& scribble, const LossConfig& cfg);

// 1 - mean_c (2 sum(pred_c t_c) + eps) / (sum pred_c + sum t_c + eps).
// `pixel_mask`, when given, restricts every sum to pixels where it is nonzero.
inline constexpr double kDiceSmooth = 1e-5;
Tensor dice_loss(const Tensor& pred, const LabelMap& target,
                 const std::vector<double>* pixel_mask = nullptr);

Tensor consistency_loss(const Tensor& p1, const Tensor& p2, const LabelMap& pseudo,
                        const std::vector<double>* pixel_mask = nullptr);

// Mean (or sum) over annotated pixels of -ln p_y.
Tensor partial_cross_entropy(const Tensor& prob, const ScribbleMask& scribble,
                             Reduction reduction = Reduction::mean);

enum class SupervisedLoss { edl, ce };

struct JointLoss {
  Tensor total;
  Tensor supervised;
  Tensor consistency;
};

// L_s = (L(p1) + L(p2) + L(p_fused)) / 3 and L_total = L_s + lambda_u * L_ECL,
// where L is partial_edl or partial_cross_entropy.
JointLoss joint_loss(const DirichletView& branch1, const DirichletView& branch2,
                     const DirichletView& fused, const ScribbleMask& scribble,
                     const LabelMap& pseudo, const LossConfig& cfg,
                     SupervisedLoss kind = SupervisedLoss::edl);

}  // namespace duedl
