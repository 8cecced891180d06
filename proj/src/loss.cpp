#include "tsr/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tsr {

namespace {

bool is_present(const BatchClassStats& stats, std::size_t i) {
  return stats.box_counts[i] > 0;
}

}  // namespace

BatchClassStats batch_stats(const std::vector<BatchBox>& boxes,
                            std::size_t category_count) {
  BatchClassStats stats;
  stats.box_counts.assign(category_count, 0);
  stats.mean_sizes.assign(category_count, 0.0);
  std::vector<double> size_totals(category_count, 0.0);
  for (const BatchBox& b : boxes) {
    if (b.category >= category_count)
      throw std::invalid_argument("batch_stats: category index " +
                                  std::to_string(b.category) +
                                  " out of range");
    if (b.width < 0.0 || b.height < 0.0)
      throw std::invalid_argument("batch_stats: negative box extent");
    ++stats.box_counts[b.category];
    size_totals[b.category] += b.height + b.width;
  }
  for (std::size_t i = 0; i < category_count; ++i)
    if (stats.box_counts[i] > 0)
      stats.mean_sizes[i] =
          size_totals[i] / static_cast<double>(stats.box_counts[i]);
  return stats;
}

double smooth_l1(double x, double beta) {
  if (!(beta > 0.0))
    throw std::invalid_argument("smooth_l1: beta must be > 0");
  const double ax = std::abs(x);
  if (ax < beta)
    return x * x / (2.0 * beta);
  return ax - 0.5 * beta;
}

double smooth_l1_grad(double x, double beta) {
  if (!(beta > 0.0))
    throw std::invalid_argument("smooth_l1: beta must be > 0");
  if (std::abs(x) <= beta)
    return x / beta;
  return x > 0.0 ? 1.0 : -1.0;
}

std::vector<double> class_hardness(const BatchClassStats& stats,
                                   const HardnessParams& params) {
  const std::size_t n = stats.category_count();
  if (stats.mean_sizes.size() != n)
    throw std::invalid_argument("class_hardness: counts/sizes length mismatch");
  if (!params.alpha.empty() && params.alpha.size() != n)
    throw std::invalid_argument("class_hardness: alpha length mismatch");
  if (!(params.lambda >= 0.0 && params.lambda <= 1.0))
    throw std::invalid_argument("class_hardness: lambda must be in [0, 1]");

  std::size_t total_count = 0;
  double total_size = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_present(stats, i))
      continue;
    if (stats.mean_sizes[i] < 0.0)
      throw std::invalid_argument("class_hardness: negative mean size");
    ++present;
    total_count += stats.box_counts[i];
    total_size += stats.mean_sizes[i];
  }
  if (present == 0)
    throw std::invalid_argument("class_hardness: no category present");

  std::vector<double> hardness(n, kAbsentHardness);
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_present(stats, i))
      continue;
    const double count_share = static_cast<double>(stats.box_counts[i]) /
                               static_cast<double>(total_count);
    const double size_share = total_size > 0.0
                                  ? stats.mean_sizes[i] / total_size
                                  : 1.0 / static_cast<double>(present);
    const double alpha = params.alpha.empty() ? 0.0 : params.alpha[i];
    hardness[i] = (1.0 - params.lambda) * count_share +
                  params.lambda * size_share + alpha;
  }
  return hardness;
}

ClassWeights class_weights(const std::vector<double>& hardness) {
  ClassWeights out;
  out.w.assign(hardness.size(), 0.0);
  double shift = -kAbsentHardness;
  for (double l : hardness) {
    if (std::isnan(l) || l == -kAbsentHardness)
      throw std::invalid_argument("class_weights: hardness must be finite");
    if (l != kAbsentHardness)
      shift = std::max(shift, -l);
  }
  if (shift == -kAbsentHardness)
    throw std::invalid_argument("class_weights: no finite hardness");
  double total = 0.0;
  for (std::size_t i = 0; i < hardness.size(); ++i) {
    if (hardness[i] == kAbsentHardness)
      continue;
    out.w[i] = std::exp(-hardness[i] - shift);
    total += out.w[i];
  }
  for (double& w : out.w)
    w /= total;
  return out;
}

double cost_sensitive_l1(const std::vector<std::vector<double>>& residuals,
                         const ClassWeights& weights, double beta) {
  double loss = 0.0;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    if (residuals[i].empty())
      continue;
    if (i >= weights.w.size() || weights.w[i] == 0.0)
      throw std::invalid_argument(
          "cost_sensitive_l1: residuals for absent category " +
          std::to_string(i));
    // Fixed left-to-right summation keeps the reduction deterministic.
    double sum = 0.0;
    for (double r : residuals[i])
      sum += smooth_l1(r, beta);
    loss += weights.w[i] * (sum / static_cast<double>(residuals[i].size()));
  }
  return loss;
}

std::vector<std::vector<double>> cost_sensitive_l1_grad(
    const std::vector<std::vector<double>>& residuals,
    const ClassWeights& weights, double beta) {
  std::vector<std::vector<double>> grad(residuals.size());
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    if (residuals[i].empty())
      continue;
    if (i >= weights.w.size() || weights.w[i] == 0.0)
      throw std::invalid_argument(
          "cost_sensitive_l1_grad: residuals for absent category " +
          std::to_string(i));
    const double scale =
        weights.w[i] / static_cast<double>(residuals[i].size());
    grad[i].reserve(residuals[i].size());
    for (double r : residuals[i])
      grad[i].push_back(scale * smooth_l1_grad(r, beta));
  }
  return grad;
}

namespace {

double log_sum_exp(const std::vector<double>& v) {
  double m = v[0];
  for (double x : v)
    m = std::max(m, x);
  double s = 0.0;
  for (double x : v)
    s += std::exp(x - m);
  return m + std::log(s);
}

void check_ce_inputs(const std::vector<std::vector<double>>& logits,
                     const std::vector<std::size_t>& labels,
                     const ClassWeights& weights) {
  if (logits.size() != labels.size())
    throw std::invalid_argument("weighted_cross_entropy: sample count mismatch");
  for (std::size_t s = 0; s < logits.size(); ++s) {
    if (logits[s].empty() || labels[s] >= logits[s].size() ||
        labels[s] >= weights.w.size())
      throw std::invalid_argument(
          "weighted_cross_entropy: invalid label at sample " +
          std::to_string(s));
    for (double v : logits[s])
      if (!std::isfinite(v))
        throw std::invalid_argument(
            "weighted_cross_entropy: non-finite logit at sample " +
            std::to_string(s));
  }
}

}  // namespace

double weighted_cross_entropy(const std::vector<std::vector<double>>& logits,
                              const std::vector<std::size_t>& labels,
                              const ClassWeights& weights) {
  check_ce_inputs(logits, labels, weights);
  if (logits.empty())
    return 0.0;
  double total = 0.0;
  for (std::size_t s = 0; s < logits.size(); ++s) {
    const double lse = log_sum_exp(logits[s]);
    total += weights.w[labels[s]] * (lse - logits[s][labels[s]]);
  }
  return total / static_cast<double>(logits.size());
}

std::vector<std::vector<double>> weighted_cross_entropy_grad(
    const std::vector<std::vector<double>>& logits,
    const std::vector<std::size_t>& labels, const ClassWeights& weights) {
  check_ce_inputs(logits, labels, weights);
  std::vector<std::vector<double>> grad(logits.size());
  if (logits.empty())
    return grad;
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  for (std::size_t s = 0; s < logits.size(); ++s) {
    const double lse = log_sum_exp(logits[s]);
    const double w = weights.w[labels[s]];
    grad[s].reserve(logits[s].size());
    for (std::size_t j = 0; j < logits[s].size(); ++j) {
      const double p = std::exp(logits[s][j] - lse);
      const double indicator = j == labels[s] ? 1.0 : 0.0;
      grad[s].push_back(w * (p - indicator) * inv_n);
    }
  }
  return grad;
}

}  // namespace tsr
