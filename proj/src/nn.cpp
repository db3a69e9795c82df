#include "countex/nn.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace countex::nn {

void ParamStore::add_uniform(const std::string& name, std::size_t rows, std::size_t cols, std::size_t fan_in,
                             const RngStream& rng) {
  RngStream stream = rng.child(name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Matrix m(rows, cols);
  for (double& v : m.data()) v = stream.uniform(-bound, bound);
  add(name, std::move(m));
}

void ParamStore::add_unit_rows(const std::string& name, std::size_t rows, std::size_t cols, const RngStream& rng) {
  RngStream stream = rng.child(name);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    auto r = m.row(i);
    double norm = 0.0;
    for (double& v : r) {
      v = stream.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : r) v /= norm;
  }
  add(name, std::move(m));
}

void ParamStore::add(const std::string& name, Matrix value) {
  if (!values_.emplace(name, std::move(value)).second) {
    throw ConfigError(fmt::format("parameter '{}' registered twice", name));
  }
}

const Matrix& ParamStore::get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw LookupError(fmt::format("unknown parameter '{}'", name));
  return it->second;
}

Matrix& ParamStore::get(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw LookupError(fmt::format("unknown parameter '{}'", name));
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, m] : values_) n += m.size();
  return n;
}

Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = ad::leaf(store_->get(name));
  bound_.emplace(name, v);
  return v;
}

std::map<std::string, Matrix> Binder::gradients() const {
  std::map<std::string, Matrix> out;
  for (const auto& [name, v] : bound_) {
    out.emplace(name, v->grad.same_shape(v->value) ? v->grad : Matrix(v->rows(), v->cols()));
  }
  return out;
}

void add_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, const RngStream& rng) {
  store.add_uniform(prefix + ".w", in, out, in, rng);
  store.add_uniform(prefix + ".b", 1, out, in, rng);
}

void add_layer_norm(ParamStore& store, const std::string& prefix, std::size_t d) {
  store.add(prefix + ".gain", Matrix(1, d, 1.0));
  store.add(prefix + ".shift", Matrix(1, d, 0.0));
}

void add_mha(ParamStore& store, const std::string& prefix, std::size_t d, const RngStream& rng) {
  for (const char* part : {"q", "k", "v", "o"}) add_linear(store, prefix + "." + part, d, d, rng);
}

LinearWeights bind_linear(Binder& bind, const std::string& prefix) {
  return {bind(prefix + ".w"), bind(prefix + ".b")};
}

LayerNormWeights bind_layer_norm(Binder& bind, const std::string& prefix) {
  return {bind(prefix + ".gain"), bind(prefix + ".shift")};
}

MhaWeights bind_mha(Binder& bind, const std::string& prefix) {
  return {bind_linear(bind, prefix + ".q"), bind_linear(bind, prefix + ".k"), bind_linear(bind, prefix + ".v"),
          bind_linear(bind, prefix + ".o")};
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x->cols() != weight->rows()) {
    throw ShapeError(fmt::format("linear: input {} incompatible with weight {}", x->value.shape_str(),
                                 weight->value.shape_str()));
  }
  return ad::add_row(ad::matmul(x, weight), bias);
}

Var layer_norm(const Var& x, const Var& gain, const Var& shift, double eps) {
  return ad::add_row(ad::mul_row(ad::standardize_rows(x, eps), gain), shift);
}

Var multi_head_attention(const Var& query, const Var& key, const Var& value, std::size_t heads,
                         const MhaWeights& w) {
  const std::size_t d = query->cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError(fmt::format("multi_head_attention: width {} not divisible by {} heads", d, heads));
  }
  if (key->rows() == 0 || key->rows() != value->rows()) {
    throw ShapeError(fmt::format("multi_head_attention: key {} / value {} need equal, nonzero row counts",
                                 key->value.shape_str(), value->value.shape_str()));
  }
  const Var q = linear(query, w.query);
  const Var k = linear(key, w.key);
  const Var v = linear(value, w.value);
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : ad::slice_cols(q, h * dh, dh);
    Var kh = heads == 1 ? k : ad::slice_cols(k, h * dh, dh);
    Var vh = heads == 1 ? v : ad::slice_cols(v, h * dh, dh);
    Var attn = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt));
    outputs.push_back(ad::matmul(attn, vh));
  }
  Var merged = heads == 1 ? outputs.front() : ad::concat_cols(outputs);
  return linear(merged, w.output);
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ShapeError(fmt::format("cosine_similarity: lengths {} vs {}", u.size(), v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv) + kCosineEps), -1.0, 1.0);
}

Var cosine_matrix(const Var& a, const Var& b) {
  Var dots = ad::matmul_nt(a, b);
  Var denom = ad::add_scalar(ad::matmul_nt(ad::row_norms(a), ad::row_norms(b)), kCosineEps);
  return ad::clamp(ad::div(dots, denom), -1.0, 1.0);
}

}  // namespace countex::nn
