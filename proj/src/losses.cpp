#include "fedkd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedkd {

namespace {
constexpr double kProbFloor = 1e-12;
}

void DistillConfig::validate() const {
  if (!(temperature > 0.0))
    throw std::invalid_argument("DistillConfig temperature must be > 0");
  if (lambda_max < 0.0)
    throw std::invalid_argument("DistillConfig lambda_max must be >= 0");
  if (ramp_threshold_epoch < 0)
    throw std::invalid_argument("DistillConfig ramp_threshold_epoch must be >= 0");
}

std::vector<double> softmax_t(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax_t: temperature must be > 0");
  if (logits.empty()) throw std::invalid_argument("softmax_t: empty logits");
  double max_scaled = logits[0] / temperature;
  for (double z : logits) max_scaled = std::max(max_scaled, z / temperature);
  std::vector<double> probs(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] / temperature - max_scaled);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

double cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
    throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                " out of range for " + std::to_string(logits.size()) +
                                " classes");
  double max_z = logits[0];
  for (double z : logits) max_z = std::max(max_z, z);
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - max_z);
  return std::log(sum) - (logits[static_cast<std::size_t>(label)] - max_z);
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size())
    throw std::invalid_argument("cross_entropy: batch row count does not match label count");
  if (logits.rows() == 0) throw std::invalid_argument("cross_entropy: empty batch");
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    total += cross_entropy(logits.row(r), labels[r]);
  }
  return total / static_cast<double>(logits.rows());
}

Matrix cross_entropy_grad(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size())
    throw std::invalid_argument("cross_entropy_grad: batch row count does not match label count");
  Matrix grad(logits.rows(), logits.cols());
  const double inv_rows = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto probs = softmax_t(logits.row(r), 1.0);
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= logits.cols())
      throw std::invalid_argument("cross_entropy_grad: label out of range");
    for (std::size_t c = 0; c < logits.cols(); ++c) grad(r, c) = probs[c] * inv_rows;
    grad(r, static_cast<std::size_t>(labels[r])) -= inv_rows;
  }
  return grad;
}

double kl_div(std::span<const double> teacher_probs, std::span<const double> student_probs) {
  if (teacher_probs.size() != student_probs.size())
    throw std::invalid_argument("kl_div: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < teacher_probs.size(); ++i) {
    const double t = teacher_probs[i];
    if (t <= 0.0) continue;
    const double s = std::max(student_probs[i], kProbFloor);
    kl += t * std::log(t / s);
  }
  return kl;
}

DistillResult distill_loss(std::span<const double> teacher_logits,
                           std::span<const double> student_logits,
                           const DistillConfig& cfg) {
  if (teacher_logits.size() != student_logits.size())
    throw std::invalid_argument("distill_loss: logit length mismatch");
  cfg.validate();
  const double t_temp = cfg.temperature;
  const auto teacher = softmax_t(teacher_logits, t_temp);
  const auto student = softmax_t(student_logits, t_temp);
  const double scale = cfg.apply_t_squared ? t_temp * t_temp : 1.0;

  DistillResult result;
  result.loss = scale * kl_div(teacher, student);
  result.grad.resize(student.size());
  // d KL / d z_s = (softmax_t(student) - softmax_t(teacher)) / T
  const double grad_scale = scale / t_temp;
  for (std::size_t i = 0; i < student.size(); ++i) {
    result.grad[i] = grad_scale * (student[i] - teacher[i]);
  }
  return result;
}

DistillBatchResult distill_loss(const Matrix& teacher_logits,
                                const Matrix& student_logits,
                                const DistillConfig& cfg) {
  if (teacher_logits.rows() != student_logits.rows() ||
      teacher_logits.cols() != student_logits.cols())
    throw std::invalid_argument("distill_loss: batch shape mismatch");
  if (teacher_logits.rows() == 0) throw std::invalid_argument("distill_loss: empty batch");
  DistillBatchResult out;
  out.grad = Matrix(student_logits.rows(), student_logits.cols());
  const double inv_rows = 1.0 / static_cast<double>(student_logits.rows());
  for (std::size_t r = 0; r < student_logits.rows(); ++r) {
    const auto row = distill_loss(teacher_logits.row(r), student_logits.row(r), cfg);
    out.loss += row.loss;
    for (std::size_t c = 0; c < student_logits.cols(); ++c) {
      out.grad(r, c) = row.grad[c] * inv_rows;
    }
  }
  out.loss *= inv_rows;
  return out;
}

double combined_step_loss(double ce_batch_loss, double kl_batch_loss, double lambda_effective) {
  if (lambda_effective < 0.0)
    throw std::invalid_argument("combined_step_loss: lambda_effective must be >= 0");
  return ce_batch_loss + lambda_effective * kl_batch_loss;
}

double lambda_at(int epoch, const DistillConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("lambda_at: epoch must be >= 0");
  if (cfg.ramp_threshold_epoch == 0) return cfg.lambda_max;
  const double frac = static_cast<double>(epoch) / cfg.ramp_threshold_epoch;
  return cfg.lambda_max * std::min(1.0, frac);
}

}  // namespace fedkd
