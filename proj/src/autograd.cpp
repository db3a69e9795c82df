#include "countex/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

namespace countex::ad {
namespace {

using BackwardFn = std::function<void(Node&)>;

bool any_requires_grad(const std::vector<Var>& parents) {
  return std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p->requires_grad; });
}

Var make(Matrix value, const char* op, std::vector<Var> parents, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  node->requires_grad = any_requires_grad(parents);
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return node;
}

// Elementwise unary op with derivative computed from (input, output).
template <typename F, typename D>
Var unary(const Var& x, const char* op, F f, D dfdx) {
  Matrix out(x->rows(), x->cols());
  const auto in = x->value.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return make(std::move(out), op, {x}, [dfdx](Node& n) {
    Node& p = *n.parents[0];
    if (!p.requires_grad) return;
    const auto in = p.value.data();
    const auto out = n.value.data();
    const auto g = n.grad.data();
    auto pg = p.grad.data();
    for (std::size_t i = 0; i < in.size(); ++i) pg[i] += g[i] * dfdx(in[i], out[i]);
  });
}

void require_scalar(const Var& s, const char* what) {
  if (s->rows() != 1 || s->cols() != 1) {
    throw ShapeError(fmt::format("{}: expected 1x1 operand, got {}", what, s->value.shape_str()));
  }
}

}  // namespace

Var leaf(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "leaf";
  node->requires_grad = true;
  return node;
}

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  node->requires_grad = false;
  return node;
}

Var scalar_constant(double v) { return constant(Matrix(1, 1, v)); }

void backward(const Var& root) {
  if (root->rows() != 1 || root->cols() != 1) {
    throw ContractError(fmt::format("backward: root must be 1x1, got {}", root->value.shape_str()));
  }
  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (n->grad.same_shape(n->value)) {
      n->grad.fill(0.0);
    } else {
      n->grad = Matrix(n->rows(), n->cols());
    }
  }
  root->grad(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->requires_grad && n->backward_fn) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  return make(countex::matmul(a->value, b->value), "matmul", {a, b}, [](Node& n) {
    Node& a = *n.parents[0];
    Node& b = *n.parents[1];
    if (a.requires_grad) a.grad += matmul_nt(n.grad, b.value);
    if (b.requires_grad) b.grad += matmul_tn(a.value, n.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  return make(countex::matmul_nt(a->value, b->value), "matmul_nt", {a, b}, [](Node& n) {
    Node& a = *n.parents[0];
    Node& b = *n.parents[1];
    if (a.requires_grad) a.grad += countex::matmul(n.grad, b.value);
    if (b.requires_grad) b.grad += matmul_tn(n.grad, a.value);
  });
}

Var transpose(const Var& a) {
  return make(a->value.transposed(), "transpose", {a}, [](Node& n) {
    Node& a = *n.parents[0];
    if (a.requires_grad) a.grad += n.grad.transposed();
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "add");
  return make(a->value + b->value, "add", {a, b}, [](Node& n) {
    for (auto& p : n.parents)
      if (p->requires_grad) p->grad += n.grad;
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "sub");
  return make(a->value - b->value, "sub", {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->grad += n.grad;
    if (n.parents[1]->requires_grad) n.parents[1]->grad -= n.grad;
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "hadamard");
  Matrix out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make(std::move(out), "hadamard", {a, b}, [](Node& n) {
    Node& a = *n.parents[0];
    Node& b = *n.parents[1];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (a.requires_grad) a.grad[i] += n.grad[i] * b.value[i];
      if (b.requires_grad) b.grad[i] += n.grad[i] * a.value[i];
    }
  });
}

Var div(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "div");
  Matrix out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b->value[i];
  return make(std::move(out), "div", {a, b}, [](Node& n) {
    Node& a = *n.parents[0];
    Node& b = *n.parents[1];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double bv = b.value[i];
      if (a.requires_grad) a.grad[i] += n.grad[i] / bv;
      if (b.requires_grad) b.grad[i] -= n.grad[i] * n.value[i] / bv;
    }
  });
}

Var add_row(const Var& x, const Var& row) {
  if (row->rows() != 1 || row->cols() != x->cols()) {
    throw ShapeError(fmt::format("add_row: bias {} does not broadcast over {}", row->value.shape_str(),
                                 x->value.shape_str()));
  }
  Matrix out = x->value;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += row->value(0, j);
  return make(std::move(out), "add_row", {x, row}, [](Node& n) {
    Node& x = *n.parents[0];
    Node& r = *n.parents[1];
    if (x.requires_grad) x.grad += n.grad;
    if (r.requires_grad)
      for (std::size_t i = 0; i < n.grad.rows(); ++i)
        for (std::size_t j = 0; j < n.grad.cols(); ++j) r.grad(0, j) += n.grad(i, j);
  });
}

Var mul_row(const Var& x, const Var& row) {
  if (row->rows() != 1 || row->cols() != x->cols()) {
    throw ShapeError(fmt::format("mul_row: gain {} does not broadcast over {}", row->value.shape_str(),
                                 x->value.shape_str()));
  }
  Matrix out = x->value;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= row->value(0, j);
  return make(std::move(out), "mul_row", {x, row}, [](Node& n) {
    Node& x = *n.parents[0];
    Node& r = *n.parents[1];
    for (std::size_t i = 0; i < n.grad.rows(); ++i)
      for (std::size_t j = 0; j < n.grad.cols(); ++j) {
        if (x.requires_grad) x.grad(i, j) += n.grad(i, j) * r.value(0, j);
        if (r.requires_grad) r.grad(0, j) += n.grad(i, j) * x.value(i, j);
      }
  });
}

Var mul_col(const Var& x, const Var& col) {
  if (col->cols() != 1 || col->rows() != x->rows()) {
    throw ShapeError(fmt::format("mul_col: column {} does not broadcast over {}", col->value.shape_str(),
                                 x->value.shape_str()));
  }
  Matrix out = x->value;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= col->value(i, 0);
  return make(std::move(out), "mul_col", {x, col}, [](Node& n) {
    Node& x = *n.parents[0];
    Node& c = *n.parents[1];
    for (std::size_t i = 0; i < n.grad.rows(); ++i)
      for (std::size_t j = 0; j < n.grad.cols(); ++j) {
        if (x.requires_grad) x.grad(i, j) += n.grad(i, j) * c.value(i, 0);
        if (c.requires_grad) c.grad(i, 0) += n.grad(i, j) * x.value(i, j);
      }
  });
}

Var mul_scalar(const Var& x, const Var& s) {
  require_scalar(s, "mul_scalar");
  Matrix out = x->value * s->scalar();
  return make(std::move(out), "mul_scalar", {x, s}, [](Node& n) {
    Node& x = *n.parents[0];
    Node& s = *n.parents[1];
    const double sv = s.scalar();
    double acc = 0.0;
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (x.requires_grad) x.grad[i] += n.grad[i] * sv;
      acc += n.grad[i] * x.value[i];
    }
    if (s.requires_grad) s.grad(0, 0) += acc;
  });
}

Var scale(const Var& x, double s) {
  return make(x->value * s, "scale", {x}, [s](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += n.grad[i] * s;
  });
}

Var add_scalar(const Var& x, double s) {
  Matrix out = x->value;
  for (double& v : out.data()) v += s;
  return make(std::move(out), "add_scalar", {x}, [](Node& n) {
    Node& x = *n.parents[0];
    if (x.requires_grad) x.grad += n.grad;
  });
}

Var square(const Var& x) {
  return unary(x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var abs(const Var& x) {
  return unary(
      x, "abs", [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var exp(const Var& x) {
  return unary(x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  return unary(x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var sqrt(const Var& x) {
  return unary(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var pow_scalar(const Var& x, double exponent) {
  return unary(
      x, "pow", [exponent](double v) { return std::pow(v, exponent); },
      [exponent](double v, double) { return exponent == 0.0 ? 0.0 : exponent * std::pow(v, exponent - 1.0); });
}

Var sigmoid(const Var& x) {
  return unary(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(const Var& x) {
  return unary(
      x, "softplus", [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
}

Var tanh(const Var& x) {
  return unary(x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var clamp(const Var& x, double lo, double hi) {
  return unary(
      x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------

Var sum(const Var& x) {
  return make(Matrix(1, 1, x->value.sum()), "sum", {x}, [](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    const double g = n.grad(0, 0);
    for (double& v : x.grad.data()) v += g;
  });
}

Var mean(const Var& x) {
  if (x->value.size() == 0) throw ShapeError("mean: empty matrix");
  const double inv = 1.0 / static_cast<double>(x->value.size());
  return make(Matrix(1, 1, x->value.sum() * inv), "mean", {x}, [inv](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    const double g = n.grad(0, 0) * inv;
    for (double& v : x.grad.data()) v += g;
  });
}

Var row_sums(const Var& x) {
  Matrix out(x->rows(), 1);
  for (std::size_t i = 0; i < x->rows(); ++i) {
    double s = 0.0;
    for (double v : x->value.row(i)) s += v;
    out(i, 0) = s;
  }
  return make(std::move(out), "row_sums", {x}, [](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (double& v : x.grad.row(i)) v += n.grad(i, 0);
  });
}

Var row_norms(const Var& x) {
  Matrix out(x->rows(), 1);
  for (std::size_t i = 0; i < x->rows(); ++i) {
    double s = 0.0;
    for (double v : x->value.row(i)) s += v * v;
    out(i, 0) = std::sqrt(s);
  }
  return make(std::move(out), "row_norms", {x}, [](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double norm = n.value(i, 0);
      if (norm == 0.0) continue;
      const double g = n.grad(i, 0) / norm;
      auto xr = x.value.row(i);
      auto gr = x.grad.row(i);
      for (std::size_t j = 0; j < xr.size(); ++j) gr[j] += g * xr[j];
    }
  });
}

Var max_rows(const Var& x, std::vector<std::size_t>* argmax) {
  if (x->cols() == 0) throw ShapeError("max_rows: matrix has no columns");
  Matrix out(x->rows(), 1);
  std::vector<std::size_t> arg(x->rows(), 0);
  for (std::size_t i = 0; i < x->rows(); ++i) {
    auto r = x->value.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < r.size(); ++j)
      if (r[j] > r[best]) best = j;
    arg[i] = best;
    out(i, 0) = r[best];
  }
  if (argmax) *argmax = arg;
  return make(std::move(out), "max_rows", {x}, [arg](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    for (std::size_t i = 0; i < arg.size(); ++i) x.grad(i, arg[i]) += n.grad(i, 0);
  });
}

Var max_cols(const Var& x, std::vector<std::size_t>* argmax) {
  if (x->rows() == 0) throw ShapeError("max_cols: matrix has no rows");
  Matrix out(1, x->cols());
  std::vector<std::size_t> arg(x->cols(), 0);
  for (std::size_t j = 0; j < x->cols(); ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < x->rows(); ++i)
      if (x->value(i, j) > x->value(best, j)) best = i;
    arg[j] = best;
    out(0, j) = x->value(best, j);
  }
  if (argmax) *argmax = arg;
  return make(std::move(out), "max_cols", {x}, [arg](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    for (std::size_t j = 0; j < arg.size(); ++j) x.grad(arg[j], j) += n.grad(0, j);
  });
}

// ---------------------------------------------------------------------------

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t cols = parts.front()->cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p->cols() != cols) {
      throw ShapeError(fmt::format("concat_rows: column mismatch {} vs {}", parts.front()->value.shape_str(),
                                   p->value.shape_str()));
    }
    rows += p->rows();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data().begin(), p->value.data().end(), out.data().begin() + offset * cols);
    offset += p->rows();
  }
  return make(std::move(out), "concat_rows", parts, [](Node& n) {
    std::size_t offset = 0;
    for (auto& p : n.parents) {
      if (p->requires_grad) {
        const double* g = n.grad.data().data() + offset * n.cols();
        auto pg = p->grad.data();
        for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += g[i];
      }
      offset += p->rows();
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t rows = parts.front()->rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p->rows() != rows) {
      throw ShapeError(fmt::format("concat_cols: row mismatch {} vs {}", parts.front()->value.shape_str(),
                                   p->value.shape_str()));
    }
    cols += p->cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p->cols(); ++j) out(i, offset + j) = p->value(i, j);
    offset += p->cols();
  }
  return make(std::move(out), "concat_cols", parts, [](Node& n) {
    std::size_t offset = 0;
    for (auto& p : n.parents) {
      if (p->requires_grad)
        for (std::size_t i = 0; i < p->rows(); ++i)
          for (std::size_t j = 0; j < p->cols(); ++j) p->grad(i, j) += n.grad(i, offset + j);
      offset += p->cols();
    }
  });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t count) {
  if (begin + count > x->rows()) {
    throw ShapeError(fmt::format("slice_rows: [{}, {}) out of range for {}", begin, begin + count,
                                 x->value.shape_str()));
  }
  const std::size_t cols = x->cols();
  std::vector<double> data(x->value.data().begin() + begin * cols,
                           x->value.data().begin() + (begin + count) * cols);
  return make(Matrix(count, cols, std::move(data)), "slice_rows", {x}, [begin](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    double* g = x.grad.data().data() + begin * x.cols();
    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  if (begin + count > x->cols()) {
    throw ShapeError(fmt::format("slice_cols: [{}, {}) out of range for {}", begin, begin + count,
                                 x->value.shape_str()));
  }
  Matrix out(x->rows(), count);
  for (std::size_t i = 0; i < x->rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = x->value(i, begin + j);
  return make(std::move(out), "slice_cols", {x}, [begin](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    for (std::size_t i = 0; i < n.rows(); ++i)
      for (std::size_t j = 0; j < n.cols(); ++j) x.grad(i, begin + j) += n.grad(i, j);
  });
}

Var gather_rows(const Var& x, const std::vector<std::size_t>& index) {
  const std::size_t cols = x->cols();
  Matrix out(index.size(), cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x->rows()) {
      throw ShapeError(fmt::format("gather_rows: index {} out of range for {}", index[i], x->value.shape_str()));
    }
    auto src = x->value.row(index[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return make(std::move(out), "gather_rows", {x}, [index](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    for (std::size_t i = 0; i < index.size(); ++i) {
      auto g = n.grad.row(i);
      auto dst = x.grad.row(index[i]);
      for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
    }
  });
}

Var reshape(const Var& x, std::size_t rows, std::size_t cols) {
  if (rows * cols != x->value.size()) {
    throw ShapeError(fmt::format("reshape: {} cannot be viewed as [{}x{}]", x->value.shape_str(), rows, cols));
  }
  return make(Matrix(rows, cols, x->value.storage()), "reshape", {x}, [](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) x.grad[i] += n.grad[i];
  });
}

// ---------------------------------------------------------------------------

Var softmax_rows(const Var& x) {
  Matrix out(x->rows(), x->cols());
  for (std::size_t i = 0; i < x->rows(); ++i) {
    auto in = x->value.row(i);
    auto o = out.row(i);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (double& v : o) v /= z;
  }
  return make(std::move(out), "softmax_rows", {x}, [](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    for (std::size_t i = 0; i < n.rows(); ++i) {
      auto y = n.value.row(i);
      auto g = n.grad.row(i);
      double dot = 0.0;
      for (std::size_t j = 0; j < y.size(); ++j) dot += g[j] * y[j];
      auto xg = x.grad.row(i);
      for (std::size_t j = 0; j < y.size(); ++j) xg[j] += y[j] * (g[j] - dot);
    }
  });
}

Var standardize_rows(const Var& x, double eps) {
  const std::size_t d = x->cols();
  if (d < 2) throw ShapeError(fmt::format("layer_norm: degenerate rows of width {} (need >= 2)", d));
  Matrix out(x->rows(), d);
  std::vector<double> inv_std(x->rows());
  for (std::size_t i = 0; i < x->rows(); ++i) {
    auto in = x->value.row(i);
    double mu = 0.0;
    for (double v : in) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : in) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    auto o = out.row(i);
    for (std::size_t j = 0; j < d; ++j) o[j] = (in[j] - mu) * inv_std[i];
  }
  return make(std::move(out), "standardize_rows", {x}, [inv_std](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    const double dn = static_cast<double>(n.cols());
    for (std::size_t i = 0; i < n.rows(); ++i) {
      auto y = n.value.row(i);
      auto g = n.grad.row(i);
      double g_mean = 0.0, gy_mean = 0.0;
      for (std::size_t j = 0; j < y.size(); ++j) {
        g_mean += g[j];
        gy_mean += g[j] * y[j];
      }
      g_mean /= dn;
      gy_mean /= dn;
      auto xg = x.grad.row(i);
      for (std::size_t j = 0; j < y.size(); ++j) xg[j] += inv_std[i] * (g[j] - g_mean - y[j] * gy_mean);
    }
  });
}

Var sparse_matmul(const SparseMatrix& s, const Var& x) {
  if (s.cols != x->rows()) {
    throw ShapeError(fmt::format("sparse_matmul: [{}x{}] x {}", s.rows, s.cols, x->value.shape_str()));
  }
  Matrix out(s.rows, x->cols());
  for (const auto& e : s.entries) {
    auto src = x->value.row(e.col);
    auto dst = out.row(e.row);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += e.value * src[j];
  }
  auto entries = std::make_shared<std::vector<SparseMatrix::Entry>>(s.entries);
  return make(std::move(out), "sparse_matmul", {x}, [entries](Node& n) {
    Node& x = *n.parents[0];
    if (!x.requires_grad) return;
    for (const auto& e : *entries) {
      auto g = n.grad.row(e.row);
      auto dst = x.grad.row(e.col);
      for (std::size_t j = 0; j < g.size(); ++j) dst[j] += e.value * g[j];
    }
  });
}

}  // namespace countex::ad
