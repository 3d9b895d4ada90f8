#pragma once

// Minimal supervised models over a flat parameter vector: multinomial
// logistic regression (hidden_dim == 0) and a one-hidden-layer ReLU MLP.
//
// Flat layout, input side first and output layer last:
//   [ W1 (hidden x input, row-major) | b1 (hidden) | W2 (classes x fan_in) | b2 (classes) ]
// where fan_in is hidden_dim for the MLP and input_dim for the linear model.
// The linear model has no W1/b1 block.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cofedmid/errors.hpp"
#include "cofedmid/rng.hpp"

namespace cofedmid {

enum class Activation { kRelu };

struct ModelSpec {
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 0;  // 0 = logistic regression
  std::size_t num_classes = 2;
  Activation activation = Activation::kRelu;

  std::size_t output_fan_in() const {
    return hidden_dim == 0 ? input_dim : hidden_dim;
  }
  std::size_t hidden_weights_offset() const { return 0; }
  std::size_t hidden_bias_offset() const { return hidden_dim * input_dim; }
  std::size_t output_weights_offset() const {
    return hidden_dim * (input_dim + 1);
  }
  std::size_t output_bias_offset() const {
    return output_weights_offset() + num_classes * output_fan_in();
  }
  std::size_t ParamCount() const {
    return output_bias_offset() + num_classes;
  }

  void Validate() const {
    Require(input_dim >= 1, "ModelSpec: input_dim must be positive");
    Require(num_classes >= 2, "ModelSpec: num_classes must be at least 2");
  }

  bool operator==(const ModelSpec&) const = default;
};

class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t size, double fill = 0.0)
      : values_(size, fill) {}
  explicit ParamVector(std::vector<double> values)
      : values_(std::move(values)) {}

  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }
  std::span<double> span() { return values_; }
  std::span<const double> span() const { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool AllFinite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  bool operator==(const ParamVector&) const = default;

 private:
  std::vector<double> values_;
};

// One labeled example; the label is the index of the one-hot class.
struct Sample {
  std::vector<double> x;
  int label = 0;

  bool operator==(const Sample&) const = default;
};

struct Prediction {
  std::vector<double> probs;
  double loss = 0.0;
};

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

struct SgdOptions {
  double lr = 0.1;
  int epochs = 1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

// Intermediate values of one forward pass, reused by the backward pass.
struct ForwardCache {
  std::vector<double> hidden;  // post-activation
  std::vector<double> logits;
  std::vector<double> probs;
  double log_sum_exp = 0.0;
};

namespace detail {

inline void CheckShapes(const ModelSpec& spec, std::span<const double> params,
                        std::span<const double> x) {
  if (params.size() != spec.ParamCount()) {
    throw ContractError("parameter vector has " + std::to_string(params.size()) +
                        " entries, model expects " +
                        std::to_string(spec.ParamCount()));
  }
  if (x.size() != spec.input_dim) {
    throw ContractError("feature vector has " + std::to_string(x.size()) +
                        " entries, model expects " +
                        std::to_string(spec.input_dim));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw ContractError("feature vector is not finite");
  }
}

inline void CheckLabel(const ModelSpec& spec, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= spec.num_classes) {
    throw ContractError("label " + std::to_string(label) + " out of range");
  }
}

}  // namespace detail

// Softmax with max-logit subtraction; returns log-sum-exp of the logits.
inline double StableSoftmax(std::span<const double> logits,
                            std::span<double> probs) {
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    probs[c] = std::exp(logits[c] - max_logit);
    sum += probs[c];
  }
  for (double& p : probs) p /= sum;
  return max_logit + std::log(sum);
}

inline void ForwardInto(const ModelSpec& spec, std::span<const double> params,
                        std::span<const double> x, ForwardCache& cache) {
  detail::CheckShapes(spec, params, x);
  const std::size_t n_in = spec.input_dim;
  const std::size_t n_hidden = spec.hidden_dim;
  const std::size_t n_out = spec.num_classes;
  const std::size_t fan_in = spec.output_fan_in();

  std::span<const double> features = x;
  if (n_hidden > 0) {
    cache.hidden.assign(n_hidden, 0.0);
    const double* w1 = params.data() + spec.hidden_weights_offset();
    const double* b1 = params.data() + spec.hidden_bias_offset();
    for (std::size_t j = 0; j < n_hidden; ++j) {
      double z = b1[j];
      const double* row = w1 + j * n_in;
      for (std::size_t i = 0; i < n_in; ++i) z += row[i] * x[i];
      cache.hidden[j] = z > 0.0 ? z : 0.0;
    }
    features = cache.hidden;
  } else {
    cache.hidden.clear();
  }

  cache.logits.assign(n_out, 0.0);
  cache.probs.assign(n_out, 0.0);
  const double* w2 = params.data() + spec.output_weights_offset();
  const double* b2 = params.data() + spec.output_bias_offset();
  for (std::size_t c = 0; c < n_out; ++c) {
    double z = b2[c];
    const double* row = w2 + c * fan_in;
    for (std::size_t j = 0; j < fan_in; ++j) z += row[j] * features[j];
    cache.logits[c] = z;
  }
  cache.log_sum_exp = StableSoftmax(cache.logits, cache.probs);
}

// Accumulates scale * d(loss)/d(params) into grad, given d(loss)/d(logits).
inline void BackwardInto(const ModelSpec& spec, std::span<const double> params,
                         std::span<const double> x, const ForwardCache& cache,
                         std::span<const double> dlogits, double scale,
                         std::span<double> grad) {
  const std::size_t n_in = spec.input_dim;
  const std::size_t n_hidden = spec.hidden_dim;
  const std::size_t n_out = spec.num_classes;
  const std::size_t fan_in = spec.output_fan_in();
  std::span<const double> features =
      n_hidden > 0 ? std::span<const double>(cache.hidden) : x;

  double* gw2 = grad.data() + spec.output_weights_offset();
  double* gb2 = grad.data() + spec.output_bias_offset();
  for (std::size_t c = 0; c < n_out; ++c) {
    const double g = scale * dlogits[c];
    gb2[c] += g;
    double* row = gw2 + c * fan_in;
    for (std::size_t j = 0; j < fan_in; ++j) row[j] += g * features[j];
  }
  if (n_hidden == 0) return;

  const double* w2 = params.data() + spec.output_weights_offset();
  double* gw1 = grad.data() + spec.hidden_weights_offset();
  double* gb1 = grad.data() + spec.hidden_bias_offset();
  for (std::size_t j = 0; j < n_hidden; ++j) {
    if (cache.hidden[j] <= 0.0) continue;
    double dh = 0.0;
    for (std::size_t c = 0; c < n_out; ++c) dh += dlogits[c] * w2[c * fan_in + j];
    dh *= scale;
    gb1[j] += dh;
    double* row = gw1 + j * n_in;
    for (std::size_t i = 0; i < n_in; ++i) row[i] += dh * x[i];
  }
}

// Cross-entropy of a cached forward pass; writes p - onehot into dlogits.
inline double CrossEntropyTerm(const ForwardCache& cache, int label,
                               std::span<double> dlogits) {
  for (std::size_t c = 0; c < cache.probs.size(); ++c) dlogits[c] = cache.probs[c];
  dlogits[static_cast<std::size_t>(label)] -= 1.0;
  return cache.log_sum_exp - cache.logits[static_cast<std::size_t>(label)];
}

inline Prediction Forward(const ModelSpec& spec, const ParamVector& params,
                          std::span<const double> x) {
  ForwardCache cache;
  ForwardInto(spec, params.span(), x, cache);
  return Prediction{std::move(cache.probs), 0.0};
}

inline Prediction Forward(const ModelSpec& spec, const ParamVector& params,
                          std::span<const double> x, int label) {
  detail::CheckLabel(spec, label);
  ForwardCache cache;
  ForwardInto(spec, params.span(), x, cache);
  const double loss =
      cache.log_sum_exp - cache.logits[static_cast<std::size_t>(label)];
  return Prediction{std::move(cache.probs), loss};
}

inline double SampleLoss(const ModelSpec& spec, const ParamVector& params,
                         const Sample& sample) {
  return Forward(spec, params, sample.x, sample.label).loss;
}

inline double MeanLoss(const ModelSpec& spec, const ParamVector& params,
                       std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const Sample& s : samples) total += SampleLoss(spec, params, s);
  return total / static_cast<double>(samples.size());
}

inline double Accuracy(const ModelSpec& spec, const ParamVector& params,
                       std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  ForwardCache cache;
  for (const Sample& s : samples) {
    ForwardInto(spec, params.span(), s.x, cache);
    const auto arg = std::max_element(cache.probs.begin(), cache.probs.end()) -
                     cache.probs.begin();
    if (arg == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

// Mean cross-entropy over the batch and its gradient.
inline LossGrad LossAndGrad(const ModelSpec& spec, const ParamVector& params,
                            std::span<const Sample> batch) {
  Require(!batch.empty(), "LossAndGrad: empty batch");
  LossGrad out{0.0, ParamVector(params.size())};
  ForwardCache cache;
  std::vector<double> dlogits(spec.num_classes);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const Sample& s : batch) {
    detail::CheckLabel(spec, s.label);
    ForwardInto(spec, params.span(), s.x, cache);
    out.loss += CrossEntropyTerm(cache, s.label, dlogits);
    BackwardInto(spec, params.span(), s.x, cache, dlogits, scale, out.grad.span());
  }
  out.loss *= scale;
  if (!std::isfinite(out.loss) || !out.grad.AllFinite()) {
    throw NumericError("LossAndGrad: non-finite loss or gradient");
  }
  return out;
}

inline ParamVector PerSampleGrad(const ModelSpec& spec, const ParamVector& params,
                                 const Sample& sample) {
  return LossAndGrad(spec, params, std::span<const Sample>(&sample, 1)).grad;
}

// Glorot-uniform weights, zero biases.
inline ParamVector InitParams(const ModelSpec& spec, std::uint64_t seed) {
  spec.Validate();
  ParamVector params(spec.ParamCount());
  Rng rng(seed);
  auto fill = [&](std::size_t offset, std::size_t fan_in, std::size_t fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) params[offset + i] = dist(rng);
  };
  if (spec.hidden_dim > 0) {
    fill(spec.hidden_weights_offset(), spec.input_dim, spec.hidden_dim);
  }
  fill(spec.output_weights_offset(), spec.output_fan_in(), spec.num_classes);
  return params;
}

// Per-sample term added on top of cross-entropy during training. Called with
// the sample's index in the training set and its predicted probabilities; it
// adds its own d(loss)/d(logits) into dlogits and returns its loss.
struct NoExtraTerm {
  double operator()(std::size_t, std::span<const double>, std::span<double>) const {
    return 0.0;
  }
};

// Minibatch SGD over `data` for opts.epochs epochs. Each epoch reshuffles the
// sample order from a stream seeded by opts.seed. The step uses the batch
// mean of (cross-entropy + extra term).
template <typename ExtraTerm>
ParamVector TrainEpochs(const ModelSpec& spec, ParamVector params,
                        std::span<const Sample> data, const SgdOptions& opts,
                        ExtraTerm&& extra) {
  Require(!data.empty(), "TrainEpochs: empty dataset");
  Require(opts.lr >= 0.0, "TrainEpochs: negative learning rate");
  Require(opts.epochs >= 1, "TrainEpochs: epochs must be >= 1");
  Require(opts.batch_size >= 1, "TrainEpochs: batch_size must be >= 1");
  Require(params.size() == spec.ParamCount(), "TrainEpochs: parameter size mismatch");

  Rng rng(opts.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  ParamVector grad(params.size());
  ForwardCache cache;
  std::vector<double> dlogits(spec.num_classes);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opts.batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = order[b];
        const Sample& s = data[idx];
        detail::CheckLabel(spec, s.label);
        ForwardInto(spec, params.span(), s.x, cache);
        CrossEntropyTerm(cache, s.label, dlogits);
        extra(idx, std::span<const double>(cache.probs), std::span<double>(dlogits));
        BackwardInto(spec, params.span(), s.x, cache, dlogits, scale, grad.span());
      }
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= opts.lr * grad[i];
    }
  }
  if (!params.AllFinite()) throw NumericError("TrainEpochs: parameters diverged");
  return params;
}

inline ParamVector SgdEpochs(const ModelSpec& spec, ParamVector params,
                             std::span<const Sample> data, const SgdOptions& opts) {
  return TrainEpochs(spec, std::move(params), data, opts, NoExtraTerm{});
}

}  // namespace cofedmid
