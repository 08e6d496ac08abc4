#pragma once

#include <span>
#include <vector>

#include "fedkd/matrix.hpp"

namespace fedkd {

// Knobs of the distillation objective. apply_t_squared keeps the gradient
// magnitude independent of the temperature.
struct DistillConfig {
  double temperature = 3.0;
  double lambda_max = 0.5;
  int ramp_threshold_epoch = 300;
  bool apply_t_squared = true;

  void validate() const;
};

// Temperature-softened softmax, computed with max subtraction.
std::vector<double> softmax_t(std::span<const double> logits, double temperature);

// -log softmax(logits)[label] at temperature 1.
double cross_entropy(std::span<const double> logits, int label);

// Mean cross-entropy over a batch of logit rows.
double cross_entropy(const Matrix& logits, std::span<const int> labels);

// Gradient of the mean batch cross-entropy w.r.t. the logits:
// (softmax(z_r) - onehot(y_r)) / rows.
Matrix cross_entropy_grad(const Matrix& logits, std::span<const int> labels);

// Sum t_i * ln(t_i / s_i), with 0 * ln(0/s) = 0 and s_i clamped to >= 1e-12.
double kl_div(std::span<const double> teacher_probs, std::span<const double> student_probs);

struct DistillResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d student_logits
};

// KL(softmax_t(teacher, T) || softmax_t(student, T)), times T^2 when
// apply_t_squared is set; grad is the analytic gradient w.r.t. the student
// logits.
DistillResult distill_loss(std::span<const double> teacher_logits,
                           std::span<const double> student_logits,
                           const DistillConfig& cfg);

struct DistillBatchResult {
  double loss = 0.0;  // mean over rows
  Matrix grad;        // gradient of the mean loss w.r.t. student logits
};

DistillBatchResult distill_loss(const Matrix& teacher_logits,
                                const Matrix& student_logits,
                                const DistillConfig& cfg);

// ce + lambda_effective * kl
double combined_step_loss(double ce_batch_loss, double kl_batch_loss, double lambda_effective);

// Linear ramp: lambda_max * min(1, epoch / threshold); lambda_max everywhere
// when the threshold is 0.
double lambda_at(int epoch, const DistillConfig& cfg);

}  // namespace fedkd
