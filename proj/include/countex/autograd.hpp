#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "countex/matrix.hpp"

namespace countex::ad {

struct Node;
using Var = std::shared_ptr<Node>;

/// One value in a define-by-run graph. `grad` has the shape of `value` and is
/// reset to zero for every node reachable from the root at the start of each
/// backward pass.
struct Node {
  Matrix value;
  Matrix grad;
  std::string op;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  std::size_t rows() const { return value.rows(); }
  std::size_t cols() const { return value.cols(); }
  double scalar() const { return value(0, 0); }
};

Var leaf(Matrix value);
Var constant(Matrix value);
Var scalar_constant(double v);

/// Reverse-mode sweep from a 1x1 root. Every reachable node's gradient is
/// zeroed first, so calling this twice yields identical gradients.
void backward(const Var& root);

// -- linear algebra --------------------------------------------------------
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a b^T
Var transpose(const Var& a);

// -- elementwise and broadcasting -----------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_row(const Var& x, const Var& row);  // x + 1 row^T, row is 1 x cols
Var mul_row(const Var& x, const Var& row);  // each row of x scaled elementwise by row
Var mul_col(const Var& x, const Var& col);  // row i of x scaled by col(i, 0)
Var mul_scalar(const Var& x, const Var& s);  // s is 1x1
Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);
Var square(const Var& x);
Var abs(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var sqrt(const Var& x);
Var pow_scalar(const Var& x, double exponent);  // requires x > 0 unless exponent is a positive integer
Var sigmoid(const Var& x);
Var softplus(const Var& x);
Var tanh(const Var& x);
Var clamp(const Var& x, double lo, double hi);

// -- reductions --------------------------------------------------------------
Var sum(const Var& x);
Var mean(const Var& x);
Var row_sums(const Var& x);   // r x 1
Var row_norms(const Var& x);  // r x 1, zero rows have zero gradient
/// Per-row maximum (r x 1); gradient routes to the lowest-index argmax.
Var max_rows(const Var& x, std::vector<std::size_t>* argmax = nullptr);
/// Per-column maximum (1 x c); gradient routes to the lowest-index argmax.
Var max_cols(const Var& x, std::vector<std::size_t>* argmax = nullptr);

// -- structural ------------------------------------------------------------
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& x, std::size_t begin, std::size_t count);
Var slice_cols(const Var& x, std::size_t begin, std::size_t count);
Var gather_rows(const Var& x, const std::vector<std::size_t>& index);
/// Same row-major data viewed with a new shape.
Var reshape(const Var& x, std::size_t rows, std::size_t cols);

// -- fused nonlinear blocks ----------------------------------------------------
Var softmax_rows(const Var& x);
/// Row standardization (x - mean) / sqrt(var + eps), no affine part.
Var standardize_rows(const Var& x, double eps);

/// Constant sparse matrix in coordinate form, used for splatting rows.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  struct Entry {
    std::size_t row;
    std::size_t col;
    double value;
  };
  std::vector<Entry> entries;
};

Var sparse_matmul(const SparseMatrix& s, const Var& x);

}  // namespace countex::ad
