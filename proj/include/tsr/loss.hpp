#pragma once

#include <cstddef>
#include <limits>
#include <vector>

namespace tsr {

/// Hyperparameters of the detection-difficulty cost-sensitive objective.
struct HardnessParams {
  /// Balance between box-count share and box-size share, in [0, 1].
  /// 0 weighs counts only, 1 weighs mean sizes only.
  double lambda = 0.5;
  /// Per-category additive offsets; empty means all zero.
  std::vector<double> alpha;
  /// Smooth-L1 transition point, > 0.
  double beta = 1.0;
};

/// Per-category box statistics of one mini-batch.
struct BatchClassStats {
  /// m_i: number of boxes of category i in the batch.
  std::vector<std::size_t> box_counts;
  /// n_i: mean box size (height + width) over category i's boxes.
  /// Meaningful only where box_counts[i] > 0.
  std::vector<double> mean_sizes;

  std::size_t category_count() const { return box_counts.size(); }
};

/// One box of a batch description: category index plus extents.
struct BatchBox {
  std::size_t category = 0;
  double width = 0.0;
  double height = 0.0;
};

/// Accumulate counts and mean sizes per category over a batch.
BatchClassStats batch_stats(const std::vector<BatchBox>& boxes,
                            std::size_t category_count);

/// Softmax weights over the categories present in a batch.
/// Sums to 1 over present categories; absent categories carry exactly 0.
struct ClassWeights {
  std::vector<double> w;
  std::size_t category_count() const { return w.size(); }
};

/// Hardness value assigned to categories absent from a batch; maps to
/// weight exactly 0 under class_weights.
inline constexpr double kAbsentHardness =
    std::numeric_limits<double>::infinity();

/// Smooth L1: x^2 / (2 beta) for |x| < beta, |x| - beta/2 otherwise.
/// Continuous and once-differentiable everywhere. Throws when beta <= 0.
double smooth_l1(double x, double beta);

/// d/dx of smooth_l1. At |x| = beta the quadratic-branch value x/beta is
/// used; both branches agree there, so the derivative is continuous.
double smooth_l1_grad(double x, double beta);

/// Per-category hardness l_i = (1-lambda) m_i / sum_j m_j
///                            + lambda n_i / sum_k n_k + alpha_i,
/// computed over categories present in the batch. When all present sizes
/// are zero the size term degenerates to uniform 1/|present|.
/// Absent categories are reported as kAbsentHardness.
/// Throws when no category is present or parameters are out of range.
std::vector<double> class_hardness(const BatchClassStats& stats,
                                   const HardnessParams& params);

/// w_i = exp(-l_i) / sum_j exp(-l_j), stabilized by shifting with
/// max(-l). Hardness kAbsentHardness yields weight exactly 0.
ClassWeights class_weights(const std::vector<double>& hardness);

/// Cost-sensitive regression loss: sum_i w_i * mean smooth-L1 over
/// category i's residual components. Categories with weight 0 must have
/// no residuals; an empty residual list contributes 0.
double cost_sensitive_l1(const std::vector<std::vector<double>>& residuals,
                         const ClassWeights& weights, double beta);

/// Partial derivatives of cost_sensitive_l1 with respect to each
/// residual component, same shape as the input.
std::vector<std::vector<double>> cost_sensitive_l1_grad(
    const std::vector<std::vector<double>>& residuals,
    const ClassWeights& weights, double beta);

/// Mean over samples of w[label] * (-log softmax(logits)[label]),
/// log-sum-exp stabilized. Throws on shape mismatch or invalid labels.
double weighted_cross_entropy(const std::vector<std::vector<double>>& logits,
                              const std::vector<std::size_t>& labels,
                              const ClassWeights& weights);

/// Partial derivatives of weighted_cross_entropy with respect to each
/// logit, same shape as the input.
std::vector<std::vector<double>> weighted_cross_entropy_grad(
    const std::vector<std::vector<double>>& logits,
    const std::vector<std::size_t>& labels, const ClassWeights& weights);

}  // namespace tsr
