#include "fedkd/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fedkd/rng.hpp"

namespace fedkd {

std::vector<int> ModelSpec::effective_hidden() const {
  std::vector<int> widths;
  widths.reserve(hidden_widths.size());
  for (int w : hidden_widths) {
    const int eff = static_cast<int>(std::lround(scale * w));
    widths.push_back(eff < 1 ? 1 : eff);
  }
  return widths;
}

std::vector<int> ModelSpec::layer_dims() const {
  std::vector<int> dims;
  dims.reserve(hidden_widths.size() + 2);
  dims.push_back(input_dim);
  for (int w : effective_hidden()) dims.push_back(w);
  dims.push_back(num_classes);
  return dims;
}

std::size_t ModelSpec::param_count() const {
  const auto dims = layer_dims();
  std::size_t count = 0;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    count += static_cast<std::size_t>(dims[k]) * dims[k + 1] + dims[k + 1];
  }
  return count;
}

void ModelSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("ModelSpec input_dim must be >= 1");
  if (num_classes < 1) throw std::invalid_argument("ModelSpec num_classes must be >= 1");
  for (int w : hidden_widths) {
    if (w < 1) throw std::invalid_argument("ModelSpec hidden_widths entries must be >= 1");
  }
  if (!(scale > 0.0 && scale <= 1.0))
    throw std::invalid_argument("ModelSpec scale must be in (0, 1]");
}

void LrSchedule::validate() const {
  if (!(base_lr > 0.0)) throw std::invalid_argument("LrSchedule base_lr must be > 0");
  int prev = -1;
  for (const auto& [epoch, lr] : milestones) {
    if (epoch <= prev)
      throw std::invalid_argument("LrSchedule milestones must be strictly increasing in epoch");
    if (!(lr > 0.0)) throw std::invalid_argument("LrSchedule milestone lr must be > 0");
    prev = epoch;
  }
}

double LrSchedule::lr_at(int epoch) const {
  double lr = base_lr;
  for (const auto& [e, milestone_lr] : milestones) {
    if (epoch >= e) lr = milestone_lr;
  }
  return lr;
}

ParamVector init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto dims = spec.layer_dims();
  ParamVector params;
  params.values.reserve(spec.param_count());
  Rng rng(seed);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const int fan_in = dims[k];
    const int fan_out = dims[k + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int i = 0; i < fan_in * fan_out; ++i) {
      params.values.push_back(rng.uniform(-bound, bound));
    }
    for (int j = 0; j < fan_out; ++j) params.values.push_back(0.0);
  }
  return params;
}

namespace {

void check_params(const ModelSpec& spec, const ParamVector& params) {
  if (params.size() != spec.param_count())
    throw std::invalid_argument("ParamVector length " + std::to_string(params.size()) +
                                " does not match spec param_count " +
                                std::to_string(spec.param_count()));
}

// z = a * W + b for one layer; `a` is rows x fan_in.
Matrix affine(const Matrix& a, const double* w, const double* b, int fan_in, int fan_out) {
  Matrix z(a.rows(), static_cast<std::size_t>(fan_out));
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto in = a.row(r);
    auto out = z.row(r);
    for (int j = 0; j < fan_out; ++j) out[j] = b[j];
    for (int i = 0; i < fan_in; ++i) {
      const double x = in[static_cast<std::size_t>(i)];
      if (x == 0.0) continue;
      const double* wrow = w + static_cast<std::size_t>(i) * fan_out;
      for (int j = 0; j < fan_out; ++j) out[j] += x * wrow[j];
    }
  }
  return z;
}

}  // namespace

Matrix forward(const ModelSpec& spec, const ParamVector& params, const Matrix& batch) {
  check_params(spec, params);
  if (batch.cols() != static_cast<std::size_t>(spec.input_dim))
    throw std::invalid_argument("forward: batch has " + std::to_string(batch.cols()) +
                                " columns, expected input_dim " +
                                std::to_string(spec.input_dim));
  const auto dims = spec.layer_dims();
  const std::size_t n_layers = dims.size() - 1;
  Matrix act = batch;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < n_layers; ++k) {
    const int fan_in = dims[k];
    const int fan_out = dims[k + 1];
    const double* w = params.values.data() + offset;
    const double* b = w + static_cast<std::size_t>(fan_in) * fan_out;
    Matrix z = affine(act, w, b, fan_in, fan_out);
    if (k + 1 < n_layers) {
      for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
    }
    act = std::move(z);
    offset += static_cast<std::size_t>(fan_in) * fan_out + fan_out;
  }
  return act;
}

Gradients backward(const ModelSpec& spec, const ParamVector& params,
                   const Matrix& batch, const Matrix& dloss_dlogits) {
  check_params(spec, params);
  if (batch.cols() != static_cast<std::size_t>(spec.input_dim))
    throw std::invalid_argument("backward: batch column count does not match input_dim");
  if (dloss_dlogits.rows() != batch.rows() ||
      dloss_dlogits.cols() != static_cast<std::size_t>(spec.num_classes))
    throw std::invalid_argument("backward: dloss_dlogits shape does not match forward output");

  const auto dims = spec.layer_dims();
  const std::size_t n_layers = dims.size() - 1;

  // Forward pass keeping the post-activation input of every layer.
  std::vector<Matrix> inputs(n_layers);   // inputs[k]: activation fed into layer k
  std::vector<Matrix> preacts(n_layers);  // preacts[k]: z of layer k (pre-ReLU)
  std::vector<std::size_t> offsets(n_layers);
  {
    Matrix act = batch;
    std::size_t offset = 0;
    for (std::size_t k = 0; k < n_layers; ++k) {
      const int fan_in = dims[k];
      const int fan_out = dims[k + 1];
      offsets[k] = offset;
      const double* w = params.values.data() + offset;
      const double* b = w + static_cast<std::size_t>(fan_in) * fan_out;
      inputs[k] = act;
      preacts[k] = affine(act, w, b, fan_in, fan_out);
      act = preacts[k];
      if (k + 1 < n_layers) {
        for (double& v : act.data()) v = v > 0.0 ? v : 0.0;
      }
      offset += static_cast<std::size_t>(fan_in) * fan_out + fan_out;
    }
  }

  Gradients grads;
  grads.values.assign(params.size(), 0.0);

  Matrix delta = dloss_dlogits;  // gradient w.r.t. layer k's pre-activation
  for (std::size_t k = n_layers; k-- > 0;) {
    const int fan_in = dims[k];
    const int fan_out = dims[k + 1];
    const double* w = params.values.data() + offsets[k];
    double* gw = grads.values.data() + offsets[k];
    double* gb = gw + static_cast<std::size_t>(fan_in) * fan_out;

    const Matrix& a = inputs[k];
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const auto in = a.row(r);
      const auto d = delta.row(r);
      for (int j = 0; j < fan_out; ++j) gb[j] += d[static_cast<std::size_t>(j)];
      for (int i = 0; i < fan_in; ++i) {
        const double x = in[static_cast<std::size_t>(i)];
        if (x == 0.0) continue;
        double* grow = gw + static_cast<std::size_t>(i) * fan_out;
        for (int j = 0; j < fan_out; ++j) grow[j] += x * d[static_cast<std::size_t>(j)];
      }
    }

    if (k > 0) {
      Matrix prev(delta.rows(), static_cast<std::size_t>(fan_in), 0.0);
      for (std::size_t r = 0; r < delta.rows(); ++r) {
        const auto d = delta.row(r);
        auto p = prev.row(r);
        for (int i = 0; i < fan_in; ++i) {
          const double* wrow = w + static_cast<std::size_t>(i) * fan_out;
          double acc = 0.0;
          for (int j = 0; j < fan_out; ++j) acc += wrow[j] * d[static_cast<std::size_t>(j)];
          p[static_cast<std::size_t>(i)] = acc;
        }
        // ReLU mask of the layer below
        const auto z = preacts[k - 1].row(r);
        for (int i = 0; i < fan_in; ++i) {
          if (z[static_cast<std::size_t>(i)] <= 0.0) p[static_cast<std::size_t>(i)] = 0.0;
        }
      }
      delta = std::move(prev);
    }
  }
  return grads;
}

ParamVector sgd_step(const ParamVector& params, const Gradients& grads,
                     double lr, double weight_decay) {
  if (params.size() != grads.size())
    throw std::invalid_argument("sgd_step: params and grads length mismatch");
  if (lr < 0.0) throw std::invalid_argument("sgd_step: lr must be >= 0");
  if (weight_decay < 0.0) throw std::invalid_argument("sgd_step: weight_decay must be >= 0");
  ParamVector out;
  out.values.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double p = params.values[i];
    const double next = p - lr * (grads.values[i] + weight_decay * p);
    if (!std::isfinite(next))
      throw std::runtime_error("sgd_step produced a non-finite parameter");
    out.values[i] = next;
  }
  return out;
}

}  // namespace fedkd
