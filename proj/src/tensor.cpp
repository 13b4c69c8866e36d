#include "mtp/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace mtp {

namespace detail {

// C (M x N) += A (M x K) @ B (K x N). k is ordered before j, so each output
// element accumulates in fixed k order while the j loop streams contiguously.
void gemm_acc(int M, int K, int N, const double* A, const double* B, double* C) {
  for (int i = 0; i < M; ++i) {
    const double* a = A + std::size_t(i) * K;
    double* c = C + std::size_t(i) * N;
    for (int k = 0; k < K; ++k) {
      const double av = a[k];
      const double* b = B + std::size_t(k) * N;
      for (int j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace detail

namespace {

using detail::gemm_acc;

bool same_shape(const Tensor& a, const Tensor& b) { return a->shape == b->shape; }

[[noreturn]] void shape_error(const char* op) {
  throw ContractError(std::string(op) + ": unsupported operand shapes");
}

}  // namespace

Tensor make_tensor(std::vector<int> shape, bool requires_grad) {
  auto t = std::make_shared<TensorNode>();
  t->shape = std::move(shape);
  for (int d : t->shape)
    if (d < 1) throw ContractError("make_tensor: dims must be positive");
  if (t->shape.size() > 3) throw ContractError("make_tensor: rank above 3");
  t->v.assign(t->numel(), 0.0);
  t->requires_grad = requires_grad;
  return t;
}

Tensor make_tensor(std::vector<int> shape, std::vector<double> value,
                   bool requires_grad) {
  auto t = make_tensor(std::move(shape), requires_grad);
  if (value.size() != t->numel())
    throw ContractError("make_tensor: value size does not match shape");
  t->v = std::move(value);
  return t;
}

Tensor scalar_tensor(double value, bool requires_grad) {
  auto t = std::make_shared<TensorNode>();
  t->v.assign(1, value);
  t->requires_grad = requires_grad;
  return t;
}

void fill_normal(Tensor t, Rng& rng, double stddev) {
  for (auto& x : t->v) x = stddev * rng.normal();
}

Tensor detach(const Tensor& a) {
  auto t = std::make_shared<TensorNode>();
  t->shape = a->shape;
  t->v = a->v;
  t->requires_grad = false;
  return t;
}

void Tape::record(const Tensor& out, std::function<void()> fn) {
  if (out->requires_grad) ops_.push_back(std::move(fn));
}

void Tape::clear() {
  ops_.clear();
  used_ = false;
}

void Tape::backward(const Tensor& loss) {
  if (loss->numel() != 1)
    throw ContractError("Tape::backward: loss must be a scalar");
  if (used_)
    throw std::logic_error("Tape::backward: tape already consumed; clear() first");
  used_ = true;
  loss->ensure_grad();
  loss->g[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  const int ra = a->rank(), rb = b->rank();
  int batch = 1, M = 0, K = 0, N = 0;
  std::vector<int> out_shape;

  if ((ra == 2 || ra == 3) && rb == 2) {
    // A rank-3 against a rank-2 weight collapses (B,R) into rows: one gemm.
    M = ra == 2 ? a->shape[0] : a->shape[0] * a->shape[1];
    K = a->shape[ra - 1];
    N = transpose_b ? b->shape[0] : b->shape[1];
    if ((transpose_b ? b->shape[1] : b->shape[0]) != K) shape_error("matmul");
    out_shape = ra == 2 ? std::vector<int>{M, N}
                        : std::vector<int>{a->shape[0], a->shape[1], N};
  } else if (ra == 3 && rb == 3) {
    if (a->shape[0] != b->shape[0]) shape_error("matmul");
    batch = a->shape[0];
    M = a->shape[1];
    K = a->shape[2];
    N = transpose_b ? b->shape[1] : b->shape[2];
    if ((transpose_b ? b->shape[2] : b->shape[1]) != K) shape_error("matmul");
    out_shape = {batch, M, N};
  } else {
    shape_error("matmul");
  }

  auto out = make_tensor(out_shape);
  out->requires_grad = a->requires_grad || b->requires_grad;

  const std::size_t a_step = std::size_t(M) * K;
  const std::size_t b_step = batch > 1 ? std::size_t(b->numel() / batch) : 0;
  const std::size_t o_step = std::size_t(M) * N;

  for (int bi = 0; bi < batch; ++bi) {
    const double* ap = a->v.data() + a_step * bi;
    const double* bp = b->v.data() + b_step * bi;
    double* op = out->v.data() + o_step * bi;
    if (transpose_b) {
      // materialize op(B) so the kernel always streams rows of B
      std::vector<double> bt(std::size_t(K) * N);
      for (int r = 0; r < N; ++r)
        for (int c = 0; c < K; ++c)
          bt[std::size_t(c) * N + r] = bp[std::size_t(r) * K + c];
      gemm_acc(M, K, N, ap, bt.data(), op);
    } else {
      gemm_acc(M, K, N, ap, bp, op);
    }
  }

  record(out, [=]() {
    for (int bi = 0; bi < batch; ++bi) {
      const double* ap = a->v.data() + a_step * bi;
      const double* bp = b->v.data() + b_step * bi;
      const double* gp = out->g.data() + o_step * bi;
      if (a->requires_grad) {
        a->ensure_grad();
        double* gap = a->g.data() + a_step * bi;
        if (transpose_b) {
          // dA += dC @ B, where B is already laid out (N x K)
          gemm_acc(M, N, K, gp, bp, gap);
        } else {
          std::vector<double> bt(std::size_t(N) * K);
          for (int r = 0; r < K; ++r)
            for (int c = 0; c < N; ++c)
              bt[std::size_t(c) * K + r] = bp[std::size_t(r) * N + c];
          gemm_acc(M, N, K, gp, bt.data(), gap);
        }
      }
      if (b->requires_grad) {
        b->ensure_grad();
        double* gbp = b->g.data() + b_step * bi;
        if (transpose_b) {
          // dB += dC^T @ A
          std::vector<double> gt(std::size_t(N) * M);
          for (int r = 0; r < M; ++r)
            for (int c = 0; c < N; ++c)
              gt[std::size_t(c) * M + r] = gp[std::size_t(r) * N + c];
          gemm_acc(N, M, K, gt.data(), ap, gbp);
        } else {
          // dB += A^T @ dC
          std::vector<double> at(std::size_t(K) * M);
          for (int r = 0; r < M; ++r)
            for (int c = 0; c < K; ++c)
              at[std::size_t(c) * M + r] = ap[std::size_t(r) * K + c];
          gemm_acc(K, M, N, at.data(), gp, gbp);
        }
      }
    }
  });
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  enum class Mode { Same, Bias, BatchRows } mode;
  if (same_shape(a, b)) {
    mode = Mode::Same;
  } else if (b->rank() == 1 && a->rank() >= 2 && a->shape.back() == b->shape[0]) {
    mode = Mode::Bias;
  } else if (a->rank() == 3 && b->rank() == 2 && a->shape[1] == b->shape[0] &&
             a->shape[2] == b->shape[1]) {
    mode = Mode::BatchRows;
  } else {
    shape_error("add");
  }

  auto out = make_tensor(a->shape);
  out->requires_grad = a->requires_grad || b->requires_grad;
  const std::size_t n = a->numel();
  const std::size_t bn = b->numel();
  for (std::size_t i = 0; i < n; ++i) out->v[i] = a->v[i] + b->v[i % bn];

  record(out, [=]() {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) a->g[i] += out->g[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) b->g[i % bn] += out->g[i];
    }
  });
  (void)mode;
  return out;
}

Tensor Tape::scale(const Tensor& a, double c) {
  auto out = make_tensor(a->shape);
  out->requires_grad = a->requires_grad;
  const std::size_t n = a->numel();
  for (std::size_t i = 0; i < n; ++i) out->v[i] = c * a->v[i];
  record(out, [=]() {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) a->g[i] += c * out->g[i];
  });
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (a->numel() == 1 && b->numel() > 1) return mul(b, a);
  const bool scalar_b = b->numel() == 1;
  if (!scalar_b && !same_shape(a, b)) shape_error("mul");

  auto out = make_tensor(a->shape);
  out->requires_grad = a->requires_grad || b->requires_grad;
  const std::size_t n = a->numel();
  if (scalar_b) {
    const double s = b->v[0];
    for (std::size_t i = 0; i < n; ++i) out->v[i] = s * a->v[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) out->v[i] = a->v[i] * b->v[i];
  }

  record(out, [=]() {
    if (a->requires_grad) {
      a->ensure_grad();
      if (scalar_b) {
        const double s = b->v[0];
        for (std::size_t i = 0; i < n; ++i) a->g[i] += s * out->g[i];
      } else {
        for (std::size_t i = 0; i < n; ++i) a->g[i] += b->v[i] * out->g[i];
      }
    }
    if (b->requires_grad) {
      b->ensure_grad();
      if (scalar_b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += a->v[i] * out->g[i];
        b->g[0] += acc;
      } else {
        for (std::size_t i = 0; i < n; ++i) b->g[i] += a->v[i] * out->g[i];
      }
    }
  });
  return out;
}

Tensor Tape::relu(const Tensor& a) {
  auto out = make_tensor(a->shape);
  out->requires_grad = a->requires_grad;
  const std::size_t n = a->numel();
  for (std::size_t i = 0; i < n; ++i) out->v[i] = a->v[i] > 0.0 ? a->v[i] : 0.0;
  record(out, [=]() {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      if (a->v[i] > 0.0) a->g[i] += out->g[i];
  });
  return out;
}

Tensor Tape::row_softmax(const Tensor& a) {
  if (a->rank() < 1) shape_error("row_softmax");
  const int D = a->shape.back();
  const std::size_t rows = a->numel() / std::size_t(D);
  auto out = make_tensor(a->shape);
  out->requires_grad = a->requires_grad;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a->v.data() + r * D;
    double* y = out->v.data() + r * D;
    double mx = x[0];
    for (int i = 1; i < D; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (int i = 0; i < D; ++i) {
      y[i] = std::exp(x[i] - mx);
      sum += y[i];
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < D; ++i) y[i] *= inv;
  }
  record(out, [=]() {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = out->v.data() + r * D;
      const double* gy = out->g.data() + r * D;
      double* gx = a->g.data() + r * D;
      double dot = 0.0;
      for (int i = 0; i < D; ++i) dot += gy[i] * y[i];
      for (int i = 0; i < D; ++i) gx[i] += y[i] * (gy[i] - dot);
    }
  });
  return out;
}

Tensor Tape::layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                        double eps) {
  if (a->rank() < 1) shape_error("layer_norm");
  const int D = a->shape.back();
  if (gain->rank() != 1 || gain->shape[0] != D || bias->rank() != 1 ||
      bias->shape[0] != D)
    shape_error("layer_norm");
  const std::size_t rows = a->numel() / std::size_t(D);

  auto out = make_tensor(a->shape);
  out->requires_grad = a->requires_grad || gain->requires_grad || bias->requires_grad;
  auto xhat = std::make_shared<std::vector<double>>(a->numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);

  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a->v.data() + r * D;
    double mean = 0.0;
    for (int i = 0; i < D; ++i) mean += x[i];
    mean /= D;
    double var = 0.0;
    for (int i = 0; i < D; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= D;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    double* xh = xhat->data() + r * D;
    double* y = out->v.data() + r * D;
    for (int i = 0; i < D; ++i) {
      xh[i] = (x[i] - mean) * inv;
      y[i] = gain->v[i] * xh[i] + bias->v[i];
    }
  }

  record(out, [=]() {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gy = out->g.data() + r * D;
      const double* xh = xhat->data() + r * D;
      if (gain->requires_grad) {
        gain->ensure_grad();
        for (int i = 0; i < D; ++i) gain->g[i] += gy[i] * xh[i];
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        for (int i = 0; i < D; ++i) bias->g[i] += gy[i];
      }
      if (a->requires_grad) {
        a->ensure_grad();
        double* gx = a->g.data() + r * D;
        const double inv = (*inv_std)[r];
        double m1 = 0.0, m2 = 0.0;
        for (int i = 0; i < D; ++i) {
          const double dyh = gy[i] * gain->v[i];
          m1 += dyh;
          m2 += dyh * xh[i];
        }
        m1 /= D;
        m2 /= D;
        for (int i = 0; i < D; ++i) {
          const double dyh = gy[i] * gain->v[i];
          gx[i] += inv * (dyh - m1 - xh[i] * m2);
        }
      }
    }
  });
  return out;
}

Tensor Tape::embedding(const Tensor& table, const std::vector<int>& ids, int B,
                       int N) {
  if (table->rank() != 2) shape_error("embedding");
  if (int(ids.size()) != B * N)
    throw ContractError("embedding: ids size must equal B*N");
  const int M = table->shape[0], D = table->shape[1];
  for (int id : ids)
    if (id < 0 || id >= M) throw ContractError("embedding: id out of range");

  auto out = make_tensor({B, N, D});
  out->requires_grad = table->requires_grad;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const double* src = table->v.data() + std::size_t(ids[r]) * D;
    double* dst = out->v.data() + r * D;
    std::copy(src, src + D, dst);
  }
  record(out, [=]() {
    table->ensure_grad();
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const double* gsrc = out->g.data() + r * D;
      double* gdst = table->g.data() + std::size_t(ids[r]) * D;
      for (int i = 0; i < D; ++i) gdst[i] += gsrc[i];
    }
  });
  return out;
}

Tensor Tape::concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat: no operands");
  auto lead = parts[0]->shape;
  lead.pop_back();
  int D = 0;
  bool rg = false;
  for (const auto& p : parts) {
    auto pl = p->shape;
    if (pl.empty()) shape_error("concat");
    const int d = pl.back();
    pl.pop_back();
    if (pl != lead) shape_error("concat");
    D += d;
    rg = rg || p->requires_grad;
  }
  auto shape = lead;
  shape.push_back(D);
  auto out = make_tensor(shape);
  out->requires_grad = rg;

  std::size_t rows = 1;
  for (int d : lead) rows *= std::size_t(d);
  int off = 0;
  for (const auto& p : parts) {
    const int d = p->shape.back();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(p->v.data() + r * d, p->v.data() + (r + 1) * d,
                out->v.data() + r * D + off);
    off += d;
  }
  record(out, [=]() {
    int o = 0;
    for (const auto& p : parts) {
      const int d = p->shape.back();
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gsrc = out->g.data() + r * D + o;
          double* gdst = p->g.data() + r * d;
          for (int i = 0; i < d; ++i) gdst[i] += gsrc[i];
        }
      }
      o += d;
    }
  });
  return out;
}

Tensor Tape::slice(const Tensor& a, int offset, int length) {
  if (a->rank() < 1) shape_error("slice");
  const int D = a->shape.back();
  if (offset < 0 || length < 1 || offset + length > D)
    throw ContractError("slice: window out of range");
  auto shape = a->shape;
  shape.back() = length;
  auto out = make_tensor(shape);
  out->requires_grad = a->requires_grad;
  const std::size_t rows = a->numel() / std::size_t(D);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(a->v.data() + r * D + offset, a->v.data() + r * D + offset + length,
              out->v.data() + r * length);
  record(out, [=]() {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gsrc = out->g.data() + r * length;
      double* gdst = a->g.data() + r * D + offset;
      for (int i = 0; i < length; ++i) gdst[i] += gsrc[i];
    }
  });
  return out;
}

Tensor Tape::reshape(const Tensor& a, std::vector<int> shape) {
  auto out = make_tensor(std::move(shape));
  if (out->numel() != a->numel())
    throw ContractError("reshape: element count mismatch");
  out->requires_grad = a->requires_grad;
  out->v = a->v;
  const std::size_t n = a->numel();
  record(out, [=]() {
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) a->g[i] += out->g[i];
  });
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  auto out = scalar_tensor(0.0);
  out->requires_grad = a->requires_grad;
  double acc = 0.0;
  for (double x : a->v) acc += x;
  out->v[0] = acc;
  const std::size_t n = a->numel();
  record(out, [=]() {
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double gy = out->g[0];
    for (std::size_t i = 0; i < n; ++i) a->g[i] += gy;
  });
  return out;
}

Tensor Tape::cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                           const std::vector<std::uint8_t>& mask) {
  if (logits->rank() < 2) shape_error("cross_entropy");
  const int M = logits->shape.back();
  const std::size_t rows = logits->numel() / std::size_t(M);
  if (targets.size() != rows || mask.size() != rows)
    throw ContractError("cross_entropy: targets/mask must cover every row");

  std::size_t active = 0;
  for (auto m : mask) active += m ? 1 : 0;
  if (active == 0) throw ContractError("cross_entropy: empty mask");

  auto lse = std::make_shared<std::vector<double>>(rows, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) continue;
    const int t = targets[r];
    if (t < 0 || t >= M) throw ContractError("cross_entropy: target out of range");
    const double* x = logits->v.data() + r * M;
    double mx = x[0];
    for (int i = 1; i < M; ++i) mx = std::max(mx, x[i]);
    double s = 0.0;
    for (int i = 0; i < M; ++i) s += std::exp(x[i] - mx);
    const double l = mx + std::log(s);
    (*lse)[r] = l;
    total += l - x[t];
  }
  auto out = scalar_tensor(total / double(active));
  out->requires_grad = logits->requires_grad;

  record(out, [=]() {
    if (!logits->requires_grad) return;
    logits->ensure_grad();
    const double gy = out->g[0] / double(active);
    for (std::size_t r = 0; r < rows; ++r) {
      if (!mask[r]) continue;
      const double* x = logits->v.data() + r * M;
      double* gx = logits->g.data() + r * M;
      const double l = (*lse)[r];
      for (int i = 0; i < M; ++i) gx[i] += gy * std::exp(x[i] - l);
      gx[targets[r]] -= gy;
    }
  });
  return out;
}

}  // namespace mtp
