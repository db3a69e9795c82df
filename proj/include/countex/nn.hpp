#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>

#include "countex/autograd.hpp"
#include "countex/rng.hpp"

namespace countex::nn {

using ad::Var;

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kCosineEps = 1e-12;

/// Named parameter matrices. Iteration order is the name order, which fixes
/// the optimizer's update order and the serialization order.
class ParamStore {
 public:
  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] drawn from `rng.child(name)`.
  void add_uniform(const std::string& name, std::size_t rows, std::size_t cols, std::size_t fan_in,
                   const RngStream& rng);
  /// Rows drawn from a standard normal and scaled to unit norm.
  void add_unit_rows(const std::string& name, std::size_t rows, std::size_t cols, const RngStream& rng);
  void add(const std::string& name, Matrix value);

  bool contains(const std::string& name) const { return values_.count(name) != 0; }
  const Matrix& get(const std::string& name) const;
  Matrix& get(const std::string& name);
  const std::map<std::string, Matrix>& all() const { return values_; }
  std::map<std::string, Matrix>& all() { return values_; }
  std::size_t scalar_count() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.values_ == b.values_; }

 private:
  std::map<std::string, Matrix> values_;
};

/// Binds store entries as graph leaves for one forward pass. Each graph gets
/// its own leaves, so independent graphs never share gradient buffers.
class Binder {
 public:
  explicit Binder(const ParamStore& store) : store_(&store) {}

  Var operator()(const std::string& name);
  /// Gradients of every parameter touched by this pass (after backward).
  std::map<std::string, Matrix> gradients() const;

 private:
  const ParamStore* store_;
  std::map<std::string, Var> bound_;
};

struct LinearWeights {
  Var weight;  // in x out
  Var bias;    // 1 x out
};

struct LayerNormWeights {
  Var gain;   // 1 x d
  Var shift;  // 1 x d
};

/// Query/key/value/output projections of one attention block.
struct MhaWeights {
  LinearWeights query;
  LinearWeights key;
  LinearWeights value;
  LinearWeights output;
};

void add_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out, const RngStream& rng);
void add_layer_norm(ParamStore& store, const std::string& prefix, std::size_t d);
void add_mha(ParamStore& store, const std::string& prefix, std::size_t d, const RngStream& rng);

LinearWeights bind_linear(Binder& bind, const std::string& prefix);
LayerNormWeights bind_layer_norm(Binder& bind, const std::string& prefix);
MhaWeights bind_mha(Binder& bind, const std::string& prefix);

/// x W + b, row-wise.
Var linear(const Var& x, const Var& weight, const Var& bias);
inline Var linear(const Var& x, const LinearWeights& w) { return linear(x, w.weight, w.bias); }

Var layer_norm(const Var& x, const Var& gain, const Var& shift, double eps = kLayerNormEps);
inline Var layer_norm(const Var& x, const LayerNormWeights& w, double eps = kLayerNormEps) {
  return layer_norm(x, w.gain, w.shift, eps);
}

/// Scaled dot-product attention split over `heads` column blocks, followed by
/// one shared output projection. Throws ConfigError unless d % heads == 0.
Var multi_head_attention(const Var& query, const Var& key, const Var& value, std::size_t heads,
                         const MhaWeights& weights);

/// u.v / (|u||v| + eps), clamped to [-1, 1]. Two zero vectors give 0.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Pairwise row cosine similarities, a.rows() x b.rows().
Var cosine_matrix(const Var& a, const Var& b);

}  // namespace countex::nn
