#include "cogbound/nn.hpp"

#include <cmath>
#include <cstdio>

#include "cogbound/error.hpp"

namespace cogbound {

Mlp::Mlp(std::vector<std::size_t> layer_sizes, Rng& rng, double output_scale)
    : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw InvalidInput("mlp needs at least an input and output layer");
  compute_offsets();
  params_.assign(offsets_.back(), 0.0);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const double scale = std::sqrt(1.0 / static_cast<double>(sizes_[l])) *
                         (l + 2 == sizes_.size() ? output_scale : 1.0);
    const auto w = weight_offset(l);
    for (std::size_t k = 0; k < sizes_[l] * sizes_[l + 1]; ++k) params_[w + k] = rng.normal() * scale;
  }
}

void Mlp::compute_offsets() {
  offsets_.assign(sizes_.size(), 0);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_[l] = off;
    off += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  }
  offsets_.back() = off;
}

void Mlp::forward(std::span<const double> x, std::vector<double>& out) const {
  thread_local Cache cache;
  forward(x, out, cache);
}

void Mlp::forward(std::span<const double> x, std::vector<double>& out, Cache& cache) const {
  if (x.size() != input_size()) throw InvalidInput("mlp input has wrong dimension");
  const std::size_t L = sizes_.size() - 1;
  cache.activations.resize(L + 1);
  cache.activations[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < L; ++l) {
    const auto& in = cache.activations[l];
    auto& act = cache.activations[l + 1];
    const std::size_t n_in = sizes_[l], n_out = sizes_[l + 1];
    act.assign(params_.begin() + static_cast<std::ptrdiff_t>(bias_offset(l)),
               params_.begin() + static_cast<std::ptrdiff_t>(bias_offset(l) + n_out));
    const double* w = params_.data() + weight_offset(l);
    for (std::size_t i = 0; i < n_in; ++i) {
      const double xi = in[i];
      if (xi == 0.0) continue;
      const double* row = w + i * n_out;
      for (std::size_t o = 0; o < n_out; ++o) act[o] += row[o] * xi;
    }
    if (l + 1 < L) {
      for (double& a : act) a = std::tanh(a);
    }
  }
  out = cache.activations[L];
}

void Mlp::backward(const Cache& cache, std::span<const double> grad_out, std::vector<double>& grad) const {
  const std::size_t L = sizes_.size() - 1;
  if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);
  std::vector<double> delta(grad_out.begin(), grad_out.end());
  std::vector<double> prev;
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t n_in = sizes_[l], n_out = sizes_[l + 1];
    const auto& in = cache.activations[l];
    double* gw = grad.data() + weight_offset(l);
    double* gb = grad.data() + bias_offset(l);
    for (std::size_t o = 0; o < n_out; ++o) gb[o] += delta[o];
    for (std::size_t i = 0; i < n_in; ++i) {
      const double xi = in[i];
      if (xi == 0.0) continue;
      double* row = gw + i * n_out;
      for (std::size_t o = 0; o < n_out; ++o) row[o] += xi * delta[o];
    }
    if (l == 0) break;
    prev.assign(n_in, 0.0);
    const double* w = params_.data() + weight_offset(l);
    for (std::size_t i = 0; i < n_in; ++i) {
      const double* row = w + i * n_out;
      double s = 0.0;
      for (std::size_t o = 0; o < n_out; ++o) s += row[o] * delta[o];
      prev[i] = s * (1.0 - in[i] * in[i]);  // tanh'
    }
    delta.swap(prev);
  }
}

nlohmann::json Mlp::to_json() const {
  return {{"layers", sizes_}, {"params", params_}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  Mlp m;
  m.sizes_ = j.at("layers").get<std::vector<std::size_t>>();
  if (m.sizes_.size() < 2) throw InvalidInput("mlp json: too few layers");
  m.compute_offsets();
  m.params_ = j.at("params").get<std::vector<double>>();
  if (m.params_.size() != m.offsets_.back()) throw InvalidInput("mlp json: parameter count mismatch");
  return m;
}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = b1_ * m_[k] + (1.0 - b1_) * grad[k];
    v_[k] = b2_ * v_[k] + (1.0 - b2_) * grad[k] * grad[k];
    params[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
  }
}

void Fnv1a::update(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h_ ^= p[i];
    h_ *= 0x100000001b3ULL;
  }
}

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
  return buf;
}

}  // namespace cogbound
