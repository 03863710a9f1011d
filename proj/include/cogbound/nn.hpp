#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "cogbound/rng.hpp"

namespace cogbound {

/// Fully connected network with tanh hidden layers and a linear output.
/// Parameters live in one flat vector so optimizers and digests can treat
/// them uniformly.
class Mlp {
 public:
  Mlp() = default;
  /// `output_scale` shrinks the initial output layer (near-uniform policies).
  Mlp(std::vector<std::size_t> layer_sizes, Rng& rng, double output_scale = 1.0);

  struct Cache {
    std::vector<std::vector<double>> activations;  // per layer, post-nonlinearity
  };

  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }

  void forward(std::span<const double> x, std::vector<double>& out) const;
  void forward(std::span<const double> x, std::vector<double>& out, Cache& cache) const;
  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(const Cache& cache, std::span<const double> grad_out, std::vector<double>& grad) const;

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + sizes_[layer] * sizes_[layer + 1];
  }
  void compute_offsets();

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

  void set_lr(double lr) { lr_ = lr; }
  /// One descent step; `grad` is consumed (left unchanged).
  void step(std::vector<double>& params, const std::vector<double>& grad);

 private:
  double lr_ = 1e-3, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

/// 64-bit FNV-1a, used for content digests.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n);
  void update(double v) { update(&v, sizeof v); }
  void update(std::uint64_t v) { update(&v, sizeof v); }
  void update(const std::string& s) {
    update(static_cast<std::uint64_t>(s.size()));
    update(s.data(), s.size());
  }
  std::uint64_t value() const { return h_; }
  std::string hex() const;

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace cogbound
