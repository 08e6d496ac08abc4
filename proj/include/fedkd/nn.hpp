#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedkd/matrix.hpp"

namespace fedkd {

// Architecture descriptor for a fully-connected classifier. `scale` shrinks
// every hidden width; the output width (num_classes) is never scaled, so
// models of different scales stay logit-compatible.
struct ModelSpec {
  int input_dim = 0;
  std::vector<int> hidden_widths;
  int num_classes = 0;
  double scale = 1.0;

  // Hidden width at layer k: max(1, round(scale * hidden_widths[k])).
  std::vector<int> effective_hidden() const;

  // [input_dim, effective hidden..., num_classes]
  std::vector<int> layer_dims() const;

  std::size_t param_count() const;

  void validate() const;  // throws std::invalid_argument naming the field
};

// Flat array of all trainable parameters. Layout: for each layer k,
// weights W_k (fan_in x fan_out, row-major by input) then biases b_k.
struct ParamVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  bool operator==(const ParamVector& o) const { return values == o.values; }
};

// Same length and layout as the owning ParamVector.
struct Gradients {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

// Piecewise-constant, right-continuous learning-rate schedule.
// lr_at(e) is the lr of the last milestone with epoch <= e, else base_lr.
struct LrSchedule {
  double base_lr = 0.1;
  std::vector<std::pair<int, double>> milestones;  // (epoch, lr), epochs strictly increasing

  void validate() const;
  double lr_at(int epoch) const;
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn layer by layer in
// row-major order; biases zero. Deterministic per (spec, seed).
ParamVector init_model(const ModelSpec& spec, std::uint64_t seed);

// ReLU hidden layers, identity output layer. batch rows are samples.
Matrix forward(const ModelSpec& spec, const ParamVector& params, const Matrix& batch);

// Exact gradient of the forward map composed with the supplied per-logit
// loss gradient (recomputes the forward pass internally).
Gradients backward(const ModelSpec& spec, const ParamVector& params,
                   const Matrix& batch, const Matrix& dloss_dlogits);

// p' = p - lr * (g + weight_decay * p). Throws if any result is non-finite.
ParamVector sgd_step(const ParamVector& params, const Gradients& grads,
                     double lr, double weight_decay);

}  // namespace fedkd
