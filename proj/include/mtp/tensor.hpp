#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "mtp/error.hpp"
#include "mtp/rng.hpp"

namespace mtp {

// Dense row-major double tensor of rank 0..3. Gradient storage is allocated
// lazily on first accumulation. All arithmetic runs in fixed (row-major,
// left-to-right) reduction order, so a given binary reproduces results
// bit-for-bit run after run.
struct TensorNode {
  std::vector<int> shape;
  std::vector<double> v;
  std::vector<double> g;
  bool requires_grad = false;

  int rank() const { return int(shape.size()); }
  std::size_t numel() const {
    std::size_t n = 1;
    for (int d : shape) n *= std::size_t(d);
    return n;
  }
  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0);
  }
  void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

using Tensor = std::shared_ptr<TensorNode>;

Tensor make_tensor(std::vector<int> shape, bool requires_grad = false);
Tensor make_tensor(std::vector<int> shape, std::vector<double> value,
                   bool requires_grad = false);
Tensor scalar_tensor(double value, bool requires_grad = false);
void fill_normal(Tensor t, Rng& rng, double stddev);

// Copy of the value that no gradient flows through.
Tensor detach(const Tensor& a);

// Records one op per primitive call; backward() replays the records in
// reverse, accumulating into .g of every tensor that requires a gradient.
class Tape {
 public:
  // out = a @ op(b). Supported shapes:
  //   (m,k)   @ (k,n)            -> (m,n)
  //   (B,R,k) @ (k,n)            -> (B,R,n)
  //   (B,R,k) @ (B,S,k) [trans]  -> (B,R,S)
  //   (B,R,S) @ (B,S,k)          -> (B,R,k)
  // transpose_b treats b as transposed over its last two dims.
  Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);

  // Same shape, or b broadcast: rank1 bias over the last dim, or rank2 over
  // the leading batch dim of a rank3 a.
  Tensor add(const Tensor& a, const Tensor& b);

  Tensor scale(const Tensor& a, double c);

  // Elementwise product; either side may be a single-element tensor, which
  // multiplies the whole other operand.
  Tensor mul(const Tensor& a, const Tensor& b);

  Tensor relu(const Tensor& a);

  // Softmax over the last dim, max-subtracted per row.
  Tensor row_softmax(const Tensor& a);

  // Normalizes the last dim: gain * (x - mean)/sqrt(var + eps) + bias.
  Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                    double eps = 1e-5);

  // table (M,D), ids as flat row-major (B,N) indices -> (B,N,D).
  Tensor embedding(const Tensor& table, const std::vector<int>& ids, int B, int N);

  Tensor concat(const std::vector<Tensor>& parts);       // over last dim
  Tensor slice(const Tensor& a, int offset, int length);  // over last dim
  Tensor reshape(const Tensor& a, std::vector<int> shape);
  Tensor sum(const Tensor& a);  // full reduction to a scalar

  // Mean negative log-likelihood over rows with mask != 0. logits may be
  // rank 2 or 3; rows = numel / last_dim. targets[r] indexes the last dim.
  Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                       const std::vector<std::uint8_t>& mask);

  // Seeds d(loss)=1 and replays the tape backwards once. loss must be a
  // scalar; calling backward twice without clear() is an error.
  void backward(const Tensor& loss);

  void clear();
  std::size_t size() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
  bool used_ = false;

  void record(const Tensor& out, std::function<void()> fn);
};

namespace detail {
// C (M x N) += A (M x K) @ B (K x N), fixed per-element accumulation order.
// Shared by the tape and the gradient-free inference paths so both produce
// bit-identical numbers.
void gemm_acc(int m, int k, int n, const double* a, const double* b, double* c);
}  // namespace detail

}  // namespace mtp
