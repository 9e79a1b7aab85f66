#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nest/errors.hpp"
#include "nest/random.hpp"
#include "nest/types.hpp"

namespace nest {

// Numerically stable scalar activations.
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

/// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) {
  if (!(y > 0.0)) throw InvalidArgument("softplus_inverse needs a positive argument");
  return y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
}

/// Output heads of one mixture component, in storage order.
enum class Head : int { MuX = 0, MuY = 1, SigmaX = 2, SigmaY = 3, Rho = 4 };
inline constexpr int kHeadCount = 5;

/// Keeps det(Sigma) bounded away from zero in floating point.
inline constexpr double kRhoLimit = 1.0 - 1e-6;

struct NetShape {
  int components = 1;                  // K
  std::vector<int> hidden{64, 64, 64};  // embedding layers; the last width is d
  double offset_scale_x = 1.0;          // C_x
  double offset_scale_y = 1.0;          // C_y

  int embedding_dim() const { return hidden.back(); }

  void validate() const {
    if (components < 1) throw InvalidArgument("number of mixture components must be >= 1");
    if (hidden.empty()) throw InvalidArgument("embedding network needs at least one layer");
    for (int w : hidden)
      if (w < 1) throw InvalidArgument("embedding layer widths must be >= 1");
    if (!(offset_scale_x >= 0.0) || !(offset_scale_y >= 0.0))
      throw InvalidArgument("offset scales must be nonnegative");
  }

  friend bool operator==(const NetShape&, const NetShape&) = default;
};

/// Read-only view of one component's head weights.
struct HeadView {
  std::array<std::span<const double>, kHeadCount> weights;
  std::array<double, kHeadCount> biases{};
};

/// All trainable quantities of the model, stored as one flat vector so that
/// optimizers, finite differences and checkpoints can treat them uniformly.
///
/// Layout: [lambda0, beta, C], then for every embedding layer W (out x in,
/// row-major) followed by b, then for every component the five heads
/// (W: d values, b: 1 value) in Head order, then the K soft-max weight vectors.
class ModelParams {
 public:
  static constexpr std::size_t kLambda0 = 0;
  static constexpr std::size_t kBeta = 1;
  static constexpr std::size_t kMagnitude = 2;
  static constexpr std::size_t kNetworkBegin = 3;

  explicit ModelParams(NetShape shape = {}) : shape_(std::move(shape)) {
    shape_.validate();
    std::size_t offset = kNetworkBegin;
    int fan_in = 2;
    for (int width : shape_.hidden) {
      layers_.push_back({fan_in, width, offset, offset + static_cast<std::size_t>(fan_in) * width});
      offset += static_cast<std::size_t>(fan_in) * width + width;
      fan_in = width;
    }
    heads_begin_ = offset;
    const std::size_t d = static_cast<std::size_t>(embedding_dim());
    offset += static_cast<std::size_t>(shape_.components) * kHeadCount * (d + 1);
    mix_begin_ = offset;
    offset += static_cast<std::size_t>(shape_.components) * d;
    theta_.assign(offset, 0.0);
    theta_[kLambda0] = 1.0;
    theta_[kBeta] = 1.0;
    theta_[kMagnitude] = 1.0;
  }

  /// Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero biases.
  static ModelParams initialized(NetShape shape, std::uint64_t seed) {
    ModelParams p(std::move(shape));
    Rng rng(seed);
    auto fill = [&](std::size_t begin, std::size_t count, int fan_in, int fan_out) {
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      for (std::size_t i = 0; i < count; ++i) p.theta_[begin + i] = rng.uniform(-a, a);
    };
    for (const Layer& l : p.layers_) fill(l.weights, static_cast<std::size_t>(l.in) * l.out, l.in, l.out);
    const int d = p.embedding_dim();
    for (int k = 0; k < p.components(); ++k)
      for (int h = 0; h < kHeadCount; ++h) fill(p.head_weight_offset(k, static_cast<Head>(h)), d, d, 1);
    for (int k = 0; k < p.components(); ++k) fill(p.mix_weight_offset(k), d, d, 1);
    return p;
  }

  const NetShape& shape() const { return shape_; }
  int components() const { return shape_.components; }
  int embedding_dim() const { return shape_.embedding_dim(); }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t size() const { return theta_.size(); }

  double lambda0() const { return theta_[kLambda0]; }
  double beta() const { return theta_[kBeta]; }
  double magnitude() const { return theta_[kMagnitude]; }
  void set_lambda0(double v) { theta_[kLambda0] = v; }
  void set_beta(double v) { theta_[kBeta] = v; }
  void set_magnitude(double v) { theta_[kMagnitude] = v; }

  // Point-process model interface shared with the ETAS and synthetic models.
  double background() const { return lambda0(); }
  double decay() const { return beta(); }

  std::span<double> values() { return theta_; }
  std::span<const double> values() const { return theta_; }

  std::size_t layer_in(std::size_t l) const { return static_cast<std::size_t>(layers_[l].in); }
  std::size_t layer_out(std::size_t l) const { return static_cast<std::size_t>(layers_[l].out); }
  std::size_t layer_weight_offset(std::size_t l) const { return layers_[l].weights; }
  std::size_t layer_bias_offset(std::size_t l) const { return layers_[l].biases; }
  std::size_t head_weight_offset(int k, Head h) const {
    const std::size_t d = static_cast<std::size_t>(embedding_dim());
    return heads_begin_ + (static_cast<std::size_t>(k) * kHeadCount + static_cast<std::size_t>(h)) * (d + 1);
  }
  std::size_t head_bias_offset(int k, Head h) const { return head_weight_offset(k, h) + embedding_dim(); }
  std::size_t mix_weight_offset(int k) const {
    return mix_begin_ + static_cast<std::size_t>(k) * embedding_dim();
  }
  /// First index past the embedding network (start of the output heads).
  std::size_t heads_begin() const { return heads_begin_; }

  HeadView head(int k) const {
    HeadView v;
    const std::size_t d = static_cast<std::size_t>(embedding_dim());
    for (int h = 0; h < kHeadCount; ++h) {
      const std::size_t w = head_weight_offset(k, static_cast<Head>(h));
      v.weights[h] = std::span<const double>(theta_).subspan(w, d);
      v.biases[h] = theta_[w + d];
    }
    return v;
  }
  void set_head_bias(int k, Head h, double value) { theta_[head_bias_offset(k, h)] = value; }

  std::span<const double> mix_weights(int k) const {
    return std::span<const double>(theta_).subspan(mix_weight_offset(k), embedding_dim());
  }

  /// Zeroes every embedding, head and soft-max weight (biases untouched).
  void zero_network_weights() {
    for (const Layer& l : layers_) std::fill_n(theta_.begin() + l.weights, l.in * l.out, 0.0);
    const std::size_t d = static_cast<std::size_t>(embedding_dim());
    for (int k = 0; k < components(); ++k) {
      for (int h = 0; h < kHeadCount; ++h)
        std::fill_n(theta_.begin() + head_weight_offset(k, static_cast<Head>(h)), d, 0.0);
      std::fill_n(theta_.begin() + mix_weight_offset(k), d, 0.0);
    }
  }

  inline Mixture mixture_at(Location s) const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  struct Layer {
    int in;
    int out;
    std::size_t weights;
    std::size_t biases;
    friend bool operator==(const Layer&, const Layer&) = default;
  };

  NetShape shape_;
  std::vector<Layer> layers_;
  std::size_t heads_begin_ = 0;
  std::size_t mix_begin_ = 0;
  std::vector<double> theta_;
};

using Embedding = std::vector<double>;

/// Forward pass of the embedding network psi, retaining the intermediates
/// needed for reverse mode.
struct EmbeddingPass {
  std::vector<std::vector<double>> pre;         // pre-activations per layer
  std::vector<std::vector<double>> activations;  // [0] is the input location
  const Embedding& embedding() const { return activations.back(); }
};

inline EmbeddingPass embed_forward(Location s, const ModelParams& theta) {
  EmbeddingPass pass;
  pass.activations.push_back({s.x, s.y});
  const auto v = theta.values();
  for (std::size_t l = 0; l < theta.layer_count(); ++l) {
    const std::size_t in = theta.layer_in(l), out = theta.layer_out(l);
    const double* W = v.data() + theta.layer_weight_offset(l);
    const double* b = v.data() + theta.layer_bias_offset(l);
    const std::vector<double>& a = pass.activations.back();
    std::vector<double> z(out), h(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = W + o * in;
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * a[i];
      z[o] = acc;
      h[o] = softplus(acc);
    }
    pass.pre.push_back(std::move(z));
    pass.activations.push_back(std::move(h));
  }
  return pass;
}

/// h(s) = psi(s | theta_h): softplus dense layers.
inline Embedding embed(Location s, const ModelParams& theta) { return embed_forward(s, theta).embedding(); }

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

/// Head pre-activations h^T W + b for one component, in Head order.
inline std::array<double, kHeadCount> head_preactivations(std::span<const double> h, const HeadView& head) {
  if (h.size() != head.weights[0].size()) throw InvalidArgument("embedding length does not match head width");
  std::array<double, kHeadCount> z{};
  for (int i = 0; i < kHeadCount; ++i) z[i] = dot(h, head.weights[i]) + head.biases[i];
  return z;
}

inline LocalKernelParams params_from_preactivations(const std::array<double, kHeadCount>& z, double offset_x,
                                                    double offset_y) {
  LocalKernelParams p;
  p.mu_x = offset_x * (sigmoid(z[0]) - 0.5);
  p.mu_y = offset_y * (sigmoid(z[1]) - 0.5);
  p.sigma_x = softplus(z[2]);
  p.sigma_y = softplus(z[3]);
  p.rho = std::clamp(2.0 * sigmoid(z[4]) - 1.0, -kRhoLimit, kRhoLimit);
  // softplus underflows to 0 for very negative inputs.
  p.sigma_x = std::max(p.sigma_x, 1e-300);
  p.sigma_y = std::max(p.sigma_y, 1e-300);
  return p;
}

/// Decodes one component's (mu, sigma, rho) from an embedding.
inline LocalKernelParams component_params(std::span<const double> h, const HeadView& head, double offset_x,
                                          double offset_y) {
  return params_from_preactivations(head_preactivations(h, head), offset_x, offset_y);
}

/// Soft-max over logits, stabilized by subtracting the maximum.
inline std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) total += (w[k] = std::exp(logits[k] - m));
  for (double& x : w) x /= total;
  return w;
}

inline std::vector<double> mixture_weights(std::span<const double> h, std::span<const std::span<const double>> mix) {
  if (mix.empty()) throw InvalidArgument("mixture needs at least one component");
  std::vector<double> logits(mix.size());
  for (std::size_t k = 0; k < mix.size(); ++k) logits[k] = dot(h, mix[k]);
  return softmax(logits);
}

/// Full forward evaluation at one location, kept for backpropagation.
struct NetEvaluation {
  EmbeddingPass pass;
  std::vector<std::array<double, kHeadCount>> head_pre;  // per component
  Mixture mixture;
};

inline NetEvaluation evaluate_net(Location s, const ModelParams& theta) {
  NetEvaluation ev;
  ev.pass = embed_forward(s, theta);
  const Embedding& h = ev.pass.embedding();
  const int K = theta.components();
  std::vector<std::span<const double>> mix(K);
  for (int k = 0; k < K; ++k) mix[k] = theta.mix_weights(k);
  const std::vector<double> phi = mixture_weights(h, mix);
  ev.head_pre.resize(K);
  ev.mixture.resize(K);
  for (int k = 0; k < K; ++k) {
    ev.head_pre[k] = head_preactivations(h, theta.head(k));
    ev.mixture[k].params =
        params_from_preactivations(ev.head_pre[k], theta.shape().offset_scale_x, theta.shape().offset_scale_y);
    ev.mixture[k].weight = phi[k];
  }
  return ev;
}

inline Mixture ModelParams::mixture_at(Location s) const { return evaluate_net(s, *this).mixture; }

/// Accumulates into `grad` the vector-Jacobian product of the map
/// theta -> (mu, sigma, rho, phi) at ev's location with `adjoint`.
inline void backpropagate(const NetEvaluation& ev, std::span<const ComponentAdjoint> adjoint, const ModelParams& theta,
                          std::span<double> grad) {
  const int K = theta.components();
  const std::size_t d = static_cast<std::size_t>(theta.embedding_dim());
  const Embedding& h = ev.pass.embedding();
  const auto v = theta.values();
  std::vector<double> dh(d, 0.0);

  // Soft-max: dL/dlogit_k = phi_k (a_k - sum_m phi_m a_m).
  double mean_adj = 0.0;
  for (int k = 0; k < K; ++k) mean_adj += ev.mixture[k].weight * adjoint[k].weight;
  for (int k = 0; k < K; ++k) {
    const double dz = ev.mixture[k].weight * (adjoint[k].weight - mean_adj);
    if (dz == 0.0) continue;
    const std::size_t w = theta.mix_weight_offset(k);
    for (std::size_t i = 0; i < d; ++i) {
      grad[w + i] += dz * h[i];
      dh[i] += dz * v[w + i];
    }
  }

  for (int k = 0; k < K; ++k) {
    const auto& z = ev.head_pre[k];
    const ComponentAdjoint& a = adjoint[k];
    std::array<double, kHeadCount> dz{};
    const double sx = sigmoid(z[0]), sy = sigmoid(z[1]), sr = sigmoid(z[4]);
    dz[0] = a.mu_x * theta.shape().offset_scale_x * sx * (1.0 - sx);
    dz[1] = a.mu_y * theta.shape().offset_scale_y * sy * (1.0 - sy);
    dz[2] = a.sigma_x * sigmoid(z[2]);
    dz[3] = a.sigma_y * sigmoid(z[3]);
    const double rho_raw = 2.0 * sr - 1.0;
    dz[4] = (rho_raw > -kRhoLimit && rho_raw < kRhoLimit) ? a.rho * 2.0 * sr * (1.0 - sr) : 0.0;
    for (int c = 0; c < kHeadCount; ++c) {
      if (dz[c] == 0.0) continue;
      const std::size_t w = theta.head_weight_offset(k, static_cast<Head>(c));
      for (std::size_t i = 0; i < d; ++i) {
        grad[w + i] += dz[c] * h[i];
        dh[i] += dz[c] * v[w + i];
      }
      grad[w + d] += dz[c];
    }
  }

  // Dense softplus layers, last to first.
  std::vector<double> upstream = std::move(dh);
  for (std::size_t l = theta.layer_count(); l-- > 0;) {
    const std::size_t in = theta.layer_in(l), out = theta.layer_out(l);
    const std::size_t W = theta.layer_weight_offset(l), B = theta.layer_bias_offset(l);
    const std::vector<double>& z = ev.pass.pre[l];
    const std::vector<double>& a = ev.pass.activations[l];
    std::vector<double> down(l > 0 ? in : 0, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double dzo = upstream[o] * sigmoid(z[o]);
      if (dzo == 0.0) continue;
      grad[B + o] += dzo;
      const std::size_t row = W + o * in;
      for (std::size_t i = 0; i < in; ++i) grad[row + i] += dzo * a[i];
      if (l > 0)
        for (std::size_t i = 0; i < in; ++i) down[i] += dzo * v[row + i];
    }
    upstream = std::move(down);
  }
}

/// Outputs at one location together with their full Jacobian.
struct ParamsWithGradients {
  Mixture outputs;
  /// jacobian[6k + c] is the gradient of output c of component k, with
  /// c in {mu_x, mu_y, sigma_x, sigma_y, rho, weight}.
  std::vector<std::vector<double>> jacobian;
};

inline ParamsWithGradients params_with_gradients(Location s, const ModelParams& theta) {
  const NetEvaluation ev = evaluate_net(s, theta);
  ParamsWithGradients out;
  out.outputs = ev.mixture;
  const int K = theta.components();
  for (int k = 0; k < K; ++k) {
    for (int c = 0; c < 6; ++c) {
      MixtureAdjoint adj(K);
      double* slot[6] = {&adj[k].mu_x, &adj[k].mu_y, &adj[k].sigma_x, &adj[k].sigma_y, &adj[k].rho, &adj[k].weight};
      *slot[c] = 1.0;
      std::vector<double> row(theta.size(), 0.0);
      backpropagate(ev, adj, theta, row);
      out.jacobian.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace nest
