#include "mtp/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "mtp/rng.hpp"

namespace mtp {

namespace {

constexpr double kMaskedOut = -1e30;
constexpr char kCheckpointMagic[8] = {'M', 'T', 'P', 'M', 'D', 'L', '0', '1'};

enum class Init { Gauss, Zero, One, IdentityPlusGauss };

const char* head_mode_name(HeadMode m) {
  return m == HeadMode::SharedTransfer ? "shared" : "independent";
}
const char* transfer_name(TransferKind t) {
  return t == TransferKind::Linear ? "linear" : "stack";
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab < 2) throw ContractError("ModelConfig: vocab must be at least 2");
  if (d_model < 1) throw ContractError("ModelConfig: d_model must be positive");
  if (n_layers < 1) throw ContractError("ModelConfig: n_layers must be positive");
  if (n_heads < 1) throw ContractError("ModelConfig: n_heads must be positive");
  if (d_model % n_heads != 0)
    throw ContractError("ModelConfig: d_model must be divisible by n_heads");
  if (max_seq_len < 2)
    throw ContractError("ModelConfig: max_seq_len must be at least 2");
  if (k_tokens < 1) throw ContractError("ModelConfig: k_tokens must be positive");
  if (nti && k_tokens < 2)
    throw ContractError("ModelConfig: next-token injection needs k_tokens >= 2");
  if (nti && head_mode != HeadMode::SharedTransfer)
    throw ContractError(
        "ModelConfig: next-token injection requires the shared-transfer head");
  const bool uses_stack = head_mode == HeadMode::SharedTransfer &&
                          transfer == TransferKind::TransformerStack &&
                          k_tokens >= 2;
  if (uses_stack && transfer_depth < 1)
    throw ContractError("ModelConfig: transfer_depth must be positive");
  if (uses_stack && dim_token_transfer) {
    if (dim_token_width < 1)
      throw ContractError("ModelConfig: dim_token_width must be positive");
    if (d_model % dim_token_width != 0)
      throw ContractError(
          "ModelConfig: d_model must be divisible by dim_token_width");
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::json j{{"vocab", vocab},
                   {"d_model", d_model},
                   {"n_layers", n_layers},
                   {"n_heads", n_heads},
                   {"max_seq_len", max_seq_len},
                   {"k_tokens", k_tokens},
                   {"head_mode", head_mode_name(head_mode)},
                   {"transfer", transfer_name(transfer)},
                   {"transfer_depth", transfer_depth},
                   {"nti", nti},
                   {"dim_token_transfer", dim_token_transfer},
                   {"dim_token_width", dim_token_width}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model config: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg.vocab = j.at("vocab").get<int>();
    cfg.d_model = j.at("d_model").get<int>();
    cfg.n_layers = j.at("n_layers").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.max_seq_len = j.at("max_seq_len").get<int>();
    cfg.k_tokens = j.at("k_tokens").get<int>();
    const auto hm = j.at("head_mode").get<std::string>();
    if (hm == "shared")
      cfg.head_mode = HeadMode::SharedTransfer;
    else if (hm == "independent")
      cfg.head_mode = HeadMode::IndependentHeads;
    else
      throw SchemaError("model config: unknown head_mode '" + hm + "'");
    const auto tr = j.at("transfer").get<std::string>();
    if (tr == "linear")
      cfg.transfer = TransferKind::Linear;
    else if (tr == "stack")
      cfg.transfer = TransferKind::TransformerStack;
    else
      throw SchemaError("model config: unknown transfer '" + tr + "'");
    cfg.transfer_depth = j.at("transfer_depth").get<int>();
    cfg.nti = j.at("nti").get<bool>();
    cfg.dim_token_transfer = j.at("dim_token_transfer").get<bool>();
    cfg.dim_token_width = j.at("dim_token_width").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("model config: ") + e.what());
  }
  try {
    cfg.validate();
  } catch (const ContractError& e) {
    throw SchemaError(std::string("model config: ") + e.what());
  }
  return cfg;
}

void apply_model_spec(ModelConfig& cfg, const std::string& spec) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto dash = spec.find('-', start);
    if (dash == std::string::npos) {
      parts.push_back(spec.substr(start));
      break;
    }
    parts.push_back(spec.substr(start, dash - start));
    start = dash + 1;
  }
  if (parts.empty()) throw ContractError("model spec: empty string");

  const std::string& head = parts[0];
  if (head.size() < 4 || head.substr(head.size() - 3) != "tok")
    throw ContractError("model spec '" + spec + "': expected '{K}tok' prefix");
  int k = 0;
  for (std::size_t i = 0; i + 3 < head.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(head[i])))
      throw ContractError("model spec '" + spec + "': bad step count");
    k = k * 10 + (head[i] - '0');
  }
  if (k < 1) throw ContractError("model spec '" + spec + "': bad step count");

  cfg.k_tokens = k;
  cfg.head_mode = HeadMode::SharedTransfer;
  cfg.transfer = TransferKind::Linear;
  cfg.nti = false;
  bool head_set = false;
  for (std::size_t p = 1; p < parts.size(); ++p) {
    const std::string& s = parts[p];
    if (s == "nti") {
      if (cfg.nti) throw ContractError("model spec '" + spec + "': duplicate nti");
      cfg.nti = true;
      continue;
    }
    if (head_set)
      throw ContractError("model spec '" + spec + "': conflicting head flags");
    if (s == "ind") {
      cfg.head_mode = HeadMode::IndependentHeads;
    } else if (s == "linear") {
      cfg.head_mode = HeadMode::SharedTransfer;
      cfg.transfer = TransferKind::Linear;
    } else if (s.size() > 2 && s.substr(0, 2) == "tf") {
      int d = 0;
      for (std::size_t i = 2; i < s.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i])))
          throw ContractError("model spec '" + spec + "': bad transfer depth");
        d = d * 10 + (s[i] - '0');
      }
      if (d < 1) throw ContractError("model spec '" + spec + "': bad transfer depth");
      cfg.head_mode = HeadMode::SharedTransfer;
      cfg.transfer = TransferKind::TransformerStack;
      cfg.transfer_depth = d;
    } else {
      throw ContractError("model spec '" + spec + "': unknown part '" + s + "'");
    }
    head_set = true;
  }
}

std::string model_spec(const ModelConfig& cfg) {
  if (cfg.k_tokens == 1) return "1tok";
  std::string s = std::to_string(cfg.k_tokens) + "tok";
  if (cfg.head_mode == HeadMode::IndependentHeads) {
    s += "-ind";
  } else if (cfg.transfer == TransferKind::Linear) {
    s += "-linear";
  } else {
    s += "-tf" + std::to_string(cfg.transfer_depth);
  }
  if (cfg.nti) s += "-nti";
  return s;
}

// ---------------------------------------------------------------------------
// Parameter registry

namespace {

struct ParamPlan {
  std::string name;
  std::vector<int> shape;
  Init init;
};

std::vector<ParamPlan> plan_params(const ModelConfig& cfg) {
  const int d = cfg.d_model;
  const int m = cfg.vocab;
  std::vector<ParamPlan> plan;
  plan.push_back({"tok_emb", {m, d}, Init::Gauss});
  plan.push_back({"pos_emb", {cfg.max_seq_len, d}, Init::Gauss});
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    plan.push_back({p + "ln1.g", {d}, Init::One});
    plan.push_back({p + "ln1.b", {d}, Init::Zero});
    plan.push_back({p + "wq", {d, d}, Init::Gauss});
    plan.push_back({p + "wk", {d, d}, Init::Gauss});
    plan.push_back({p + "wv", {d, d}, Init::Gauss});
    plan.push_back({p + "ln2.g", {d}, Init::One});
    plan.push_back({p + "ln2.b", {d}, Init::Zero});
    plan.push_back({p + "w1", {d, 4 * d}, Init::Gauss});
    plan.push_back({p + "b1", {4 * d}, Init::Zero});
    plan.push_back({p + "w2", {4 * d, d}, Init::Gauss});
    plan.push_back({p + "b2", {d}, Init::Zero});
  }
  plan.push_back({"w_out", {d, m}, Init::Gauss});
  for (int j = 2; j <= cfg.k_tokens; ++j) {
    const std::string sp = "step" + std::to_string(j) + ".";
    if (cfg.head_mode == HeadMode::IndependentHeads) {
      plan.push_back({sp + "w_out", {d, m}, Init::Gauss});
    } else if (cfg.transfer == TransferKind::Linear) {
      plan.push_back({sp + "transfer.t", {m, m}, Init::IdentityPlusGauss});
    } else {
      const int w = cfg.dim_token_transfer ? cfg.dim_token_width : d;
      for (int b = 0; b < cfg.transfer_depth; ++b) {
        const std::string bp = sp + "stack" + std::to_string(b) + ".";
        plan.push_back({bp + "ln1.g", {w}, Init::One});
        plan.push_back({bp + "ln1.b", {w}, Init::Zero});
        if (cfg.dim_token_transfer) {
          plan.push_back({bp + "wq", {w, w}, Init::Gauss});
          plan.push_back({bp + "wk", {w, w}, Init::Gauss});
        }
        plan.push_back({bp + "wv", {w, w}, Init::Gauss});
        plan.push_back({bp + "ln2.g", {w}, Init::One});
        plan.push_back({bp + "ln2.b", {w}, Init::Zero});
        plan.push_back({bp + "w1", {w, 4 * w}, Init::Gauss});
        plan.push_back({bp + "b1", {4 * w}, Init::Zero});
        plan.push_back({bp + "w2", {4 * w, w}, Init::Gauss});
        plan.push_back({bp + "b2", {w}, Init::Zero});
      }
    }
  }
  if (cfg.nti) plan.push_back({"nti_k", {1}, Init::One});
  return plan;
}

}  // namespace

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (auto& p : plan_params(cfg_))
    params_.emplace_back(p.name, make_tensor(p.shape, true));
}

void Model::init_params(std::uint64_t seed) {
  Rng rng(seed);
  const auto plan = plan_params(cfg_);
  for (std::size_t idx = 0; idx < plan.size(); ++idx) {
    auto& t = params_[idx].second;
    switch (plan[idx].init) {
      case Init::Gauss:
        fill_normal(t, rng, 0.02);
        break;
      case Init::Zero:
        std::fill(t->v.begin(), t->v.end(), 0.0);
        break;
      case Init::One:
        std::fill(t->v.begin(), t->v.end(), 1.0);
        break;
      case Init::IdentityPlusGauss: {
        fill_normal(t, rng, 0.02);
        const int n = t->shape[0];
        for (int i = 0; i < n; ++i) t->v[std::size_t(i) * n + i] += 1.0;
        break;
      }
    }
  }
}

Tensor Model::param(const std::string& name) const {
  for (const auto& [n, t] : params_)
    if (n == name) return t;
  throw ContractError("unknown parameter '" + name + "'");
}

// ---------------------------------------------------------------------------
// Forward passes on the tape

namespace {

Tensor causal_mask(int n) {
  auto mask = make_tensor({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) mask->v[std::size_t(i) * n + j] = kMaskedOut;
  return mask;
}

void check_tokens(const ModelConfig& cfg, const std::vector<int>& tokens,
                  int batch, int length) {
  if (batch < 1 || length < 1)
    throw ContractError("forward: batch and length must be positive");
  if (length > cfg.max_seq_len)
    throw ContractError("forward: sequence longer than max_seq_len");
  if (tokens.size() != std::size_t(batch) * std::size_t(length))
    throw ContractError("forward: token buffer does not match batch*length");
  for (int id : tokens)
    if (id < 0 || id >= cfg.vocab) throw ContractError("forward: token id out of range");
}

}  // namespace

Tensor Model::block_forward(Tape& tape, Tensor x, const std::string& prefix,
                            const Tensor& mask, int batch, int length) const {
  (void)batch;
  (void)length;
  const int d = x->shape.back();
  const int heads = cfg_.n_heads;
  const int dk = d / heads;
  const double att_scale = 1.0 / std::sqrt(double(dk));

  auto a = tape.layer_norm(x, param(prefix + "ln1.g"), param(prefix + "ln1.b"));
  auto q = tape.matmul(a, param(prefix + "wq"));
  auto k = tape.matmul(a, param(prefix + "wk"));
  auto v = tape.matmul(a, param(prefix + "wv"));

  Tensor att;
  if (heads == 1) {
    auto scores = tape.add(tape.scale(tape.matmul(q, k, true), att_scale), mask);
    att = tape.matmul(tape.row_softmax(scores), v);
  } else {
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      auto qh = tape.slice(q, h * dk, dk);
      auto kh = tape.slice(k, h * dk, dk);
      auto vh = tape.slice(v, h * dk, dk);
      auto scores = tape.add(tape.scale(tape.matmul(qh, kh, true), att_scale), mask);
      outs.push_back(tape.matmul(tape.row_softmax(scores), vh));
    }
    att = tape.concat(outs);
  }

  auto y = tape.add(att, x);
  auto z = tape.layer_norm(y, param(prefix + "ln2.g"), param(prefix + "ln2.b"));
  auto f1 = tape.relu(tape.add(tape.matmul(z, param(prefix + "w1")), param(prefix + "b1")));
  auto f = tape.add(tape.matmul(f1, param(prefix + "w2")), param(prefix + "b2"));
  return tape.add(f, y);
}

Tensor Model::forward_hidden(Tape& tape, const std::vector<int>& tokens,
                             int batch, int length) const {
  check_tokens(cfg_, tokens, batch, length);
  std::vector<int> positions(tokens.size());
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < length; ++i) positions[std::size_t(b) * length + i] = i;

  auto x = tape.add(tape.embedding(param("tok_emb"), tokens, batch, length),
                    tape.embedding(param("pos_emb"), positions, batch, length));
  auto mask = causal_mask(length);
  for (int i = 0; i < cfg_.n_layers; ++i)
    x = block_forward(tape, x, "layer" + std::to_string(i) + ".", mask, batch, length);
  return x;
}

Tensor Model::stack_forward(Tape& tape, Tensor h, int step, int batch,
                            int length) const {
  const std::string sp = "step" + std::to_string(step) + ".";
  const int d = cfg_.d_model;

  if (!cfg_.dim_token_transfer) {
    // One-token mode: attention over a single position reduces to its value
    // vector, so each block is two residual updates applied position-wise.
    auto x = std::move(h);
    for (int b = 0; b < cfg_.transfer_depth; ++b) {
      const std::string bp = sp + "stack" + std::to_string(b) + ".";
      auto a = tape.layer_norm(x, param(bp + "ln1.g"), param(bp + "ln1.b"));
      auto y = tape.add(tape.matmul(a, param(bp + "wv")), x);
      auto z = tape.layer_norm(y, param(bp + "ln2.g"), param(bp + "ln2.b"));
      auto f1 = tape.relu(tape.add(tape.matmul(z, param(bp + "w1")), param(bp + "b1")));
      auto f = tape.add(tape.matmul(f1, param(bp + "w2")), param(bp + "b2"));
      x = tape.add(f, y);
    }
    return x;
  }

  // Dim-token mode: read the hidden vector as d/w tokens of width w and run
  // full (bidirectional) attention over them.
  const int w = cfg_.dim_token_width;
  const int nt = d / w;
  const double att_scale = 1.0 / std::sqrt(double(w));
  auto x = tape.reshape(h, {batch * length, nt, w});
  for (int b = 0; b < cfg_.transfer_depth; ++b) {
    const std::string bp = sp + "stack" + std::to_string(b) + ".";
    auto a = tape.layer_norm(x, param(bp + "ln1.g"), param(bp + "ln1.b"));
    auto q = tape.matmul(a, param(bp + "wq"));
    auto k = tape.matmul(a, param(bp + "wk"));
    auto v = tape.matmul(a, param(bp + "wv"));
    auto scores = tape.scale(tape.matmul(q, k, true), att_scale);
    auto att = tape.matmul(tape.row_softmax(scores), v);
    auto y = tape.add(att, x);
    auto z = tape.layer_norm(y, param(bp + "ln2.g"), param(bp + "ln2.b"));
    auto f1 = tape.relu(tape.add(tape.matmul(z, param(bp + "w1")), param(bp + "b1")));
    auto f = tape.add(tape.matmul(f1, param(bp + "w2")), param(bp + "b2"));
    x = tape.add(f, y);
  }
  return tape.reshape(x, {batch, length, d});
}

std::vector<Tensor> Model::forward_steps(Tape& tape, const std::vector<int>& tokens,
                                         int batch, int length) const {
  auto h = forward_hidden(tape, tokens, batch, length);
  auto logits1 = tape.matmul(h, param("w_out"));
  std::vector<Tensor> steps{logits1};
  if (cfg_.k_tokens == 1) return steps;

  // Hidden state steps >= 2 read from; with injection it also carries the
  // embedding of the teacher-forced next token.
  Tensor h_inj = h;
  if (cfg_.nti) {
    std::vector<int> next_ids(tokens.size(), 0);
    for (int b = 0; b < batch; ++b)
      for (int i = 0; i + 1 < length; ++i)
        next_ids[std::size_t(b) * length + i] = tokens[std::size_t(b) * length + i + 1];
    auto next_emb = tape.embedding(param("tok_emb"), next_ids, batch, length);
    h_inj = tape.add(h, tape.mul(next_emb, param("nti_k")));
  }

  Tensor shared_base;  // injected step-1 logits, feeding every linear transfer
  if (cfg_.head_mode == HeadMode::SharedTransfer && cfg_.transfer == TransferKind::Linear)
    shared_base = cfg_.nti ? tape.matmul(h_inj, param("w_out")) : logits1;

  for (int j = 2; j <= cfg_.k_tokens; ++j) {
    const std::string sp = "step" + std::to_string(j) + ".";
    if (cfg_.head_mode == HeadMode::IndependentHeads) {
      steps.push_back(tape.matmul(h, param(sp + "w_out")));
    } else if (cfg_.transfer == TransferKind::Linear) {
      steps.push_back(tape.matmul(shared_base, param(sp + "transfer.t")));
    } else {
      auto hj = stack_forward(tape, h_inj, j, batch, length);
      steps.push_back(tape.matmul(hj, param("w_out")));
    }
  }
  return steps;
}

Tensor Model::loss(Tape& tape, const std::vector<int>& tokens, int batch,
                   int length, const std::vector<int>& lengths,
                   std::vector<double>* per_step) const {
  if (lengths.size() != std::size_t(batch))
    throw ContractError("loss: lengths must have one entry per sequence");
  for (int l : lengths)
    if (l < 2 || l > length)
      throw ContractError("loss: sequence lengths must lie in [2, padded length]");

  auto steps = forward_steps(tape, tokens, batch, length);
  if (per_step) per_step->clear();

  Tensor total;
  for (int j = 1; j <= cfg_.k_tokens; ++j) {
    std::vector<int> targets(tokens.size(), 0);
    std::vector<std::uint8_t> mask(tokens.size(), 0);
    for (int b = 0; b < batch; ++b) {
      for (int i = 0; i + j < lengths[b]; ++i) {
        const std::size_t r = std::size_t(b) * length + i;
        targets[r] = tokens[r + j];
        mask[r] = 1;
      }
    }
    auto lj = tape.cross_entropy(steps[std::size_t(j) - 1], targets, mask);
    if (per_step) per_step->push_back(lj->v[0]);
    total = total ? tape.add(total, lj) : lj;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Gradient-free passes (bit-identical mirrors of the tape ops)

namespace {

// Mirrors Tape::layer_norm forward arithmetic exactly.
void norm_rows(const double* x, const double* gain, const double* bias, int rows,
               int d, double* y, double eps = 1e-5) {
  for (int r = 0; r < rows; ++r) {
    const double* xr = x + std::size_t(r) * d;
    double* yr = y + std::size_t(r) * d;
    double mean = 0.0;
    for (int i = 0; i < d; ++i) mean += xr[i];
    mean /= d;
    double var = 0.0;
    for (int i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int i = 0; i < d; ++i) yr[i] = gain[i] * ((xr[i] - mean) * inv) + bias[i];
  }
}

// Mirrors Tape::row_softmax forward arithmetic exactly.
void softmax_row(double* x, int len) {
  double mx = x[0];
  for (int i = 1; i < len; ++i) mx = std::max(mx, x[i]);
  double sum = 0.0;
  for (int i = 0; i < len; ++i) {
    x[i] = std::exp(x[i] - mx);
    sum += x[i];
  }
  const double inv = 1.0 / sum;
  for (int i = 0; i < len; ++i) x[i] *= inv;
}

void add_bias_rows(double* x, const double* bias, int rows, int d) {
  for (int r = 0; r < rows; ++r)
    for (int i = 0; i < d; ++i) x[std::size_t(r) * d + i] += bias[i];
}

void relu_inplace(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

}  // namespace

ForwardTrace fast_forward(const Model& m, const std::vector<int>& tokens,
                          int batch, int length) {
  const auto& cfg = m.config();
  check_tokens(cfg, tokens, batch, length);
  const int d = cfg.d_model;
  const int heads = cfg.n_heads;
  const int dk = d / heads;
  const double att_scale = 1.0 / std::sqrt(double(dk));
  const int rows = batch * length;

  const auto& tok = m.param("tok_emb")->v;
  const auto& pos = m.param("pos_emb")->v;

  ForwardTrace tr;
  tr.batch = batch;
  tr.length = length;
  tr.hidden.assign(std::size_t(rows) * d, 0.0);
  for (int b = 0; b < batch; ++b) {
    for (int i = 0; i < length; ++i) {
      const std::size_t r = std::size_t(b) * length + i;
      const double* te = tok.data() + std::size_t(tokens[r]) * d;
      const double* pe = pos.data() + std::size_t(i) * d;
      double* x = tr.hidden.data() + r * d;
      for (int c = 0; c < d; ++c) x[c] = te[c] + pe[c];
    }
  }

  std::vector<double> a(std::size_t(rows) * d), q(a.size()), k(a.size()), v(a.size());
  std::vector<double> att(a.size()), scores(std::size_t(length) * length);
  std::vector<double> f1(std::size_t(rows) * 4 * d), f2(std::size_t(rows) * d);

  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    const std::string p = "layer" + std::to_string(layer) + ".";
    const auto& g1 = m.param(p + "ln1.g")->v;
    const auto& c1 = m.param(p + "ln1.b")->v;
    norm_rows(tr.hidden.data(), g1.data(), c1.data(), rows, d, a.data());

    std::fill(q.begin(), q.end(), 0.0);
    std::fill(k.begin(), k.end(), 0.0);
    std::fill(v.begin(), v.end(), 0.0);
    detail::gemm_acc(rows, d, d, a.data(), m.param(p + "wq")->v.data(), q.data());
    detail::gemm_acc(rows, d, d, a.data(), m.param(p + "wk")->v.data(), k.data());
    detail::gemm_acc(rows, d, d, a.data(), m.param(p + "wv")->v.data(), v.data());

    auto& attn_out = tr.attention.emplace_back();
    attn_out.assign(std::size_t(batch) * heads * length * length, 0.0);

    std::fill(att.begin(), att.end(), 0.0);
    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < heads; ++h) {
        // scores(i, c) over the causal prefix; padded tail stays exact zero
        // after softmax, matching the masked full-width tape computation.
        for (int i = 0; i < length; ++i) {
          const double* qr = q.data() + (std::size_t(b) * length + i) * d + h * dk;
          double* sr = scores.data() + std::size_t(i) * length;
          for (int c = 0; c <= i; ++c) {
            const double* kr = k.data() + (std::size_t(b) * length + c) * d + h * dk;
            double dot = 0.0;
            for (int e = 0; e < dk; ++e) dot += qr[e] * kr[e];
            sr[c] = dot * att_scale;
          }
          softmax_row(sr, i + 1);
          for (int c = i + 1; c < length; ++c) sr[c] = 0.0;
        }
        double* cap = attn_out.data() +
                      (std::size_t(b) * heads + h) * length * length;
        std::copy(scores.begin(), scores.begin() + std::size_t(length) * length, cap);
        // att rows accumulate over cached positions in ascending order, the
        // same order the tape's gemm uses.
        for (int i = 0; i < length; ++i) {
          const double* sr = scores.data() + std::size_t(i) * length;
          double* orow = att.data() + (std::size_t(b) * length + i) * d + h * dk;
          for (int c = 0; c <= i; ++c) {
            const double* vr = v.data() + (std::size_t(b) * length + c) * d + h * dk;
            const double pw = sr[c];
            for (int e = 0; e < dk; ++e) orow[e] += pw * vr[e];
          }
        }
      }
    }

    for (std::size_t i = 0; i < tr.hidden.size(); ++i) att[i] += tr.hidden[i];

    const auto& g2 = m.param(p + "ln2.g")->v;
    const auto& c2 = m.param(p + "ln2.b")->v;
    norm_rows(att.data(), g2.data(), c2.data(), rows, d, a.data());
    std::fill(f1.begin(), f1.end(), 0.0);
    detail::gemm_acc(rows, d, 4 * d, a.data(), m.param(p + "w1")->v.data(), f1.data());
    add_bias_rows(f1.data(), m.param(p + "b1")->v.data(), rows, 4 * d);
    relu_inplace(f1.data(), f1.size());
    std::fill(f2.begin(), f2.end(), 0.0);
    detail::gemm_acc(rows, 4 * d, d, f1.data(), m.param(p + "w2")->v.data(), f2.data());
    add_bias_rows(f2.data(), m.param(p + "b2")->v.data(), rows, d);
    for (std::size_t i = 0; i < tr.hidden.size(); ++i) tr.hidden[i] = f2[i] + att[i];
  }

  tr.logits.assign(std::size_t(rows) * cfg.vocab, 0.0);
  detail::gemm_acc(rows, d, cfg.vocab, tr.hidden.data(), m.param("w_out")->v.data(),
                   tr.logits.data());
  return tr;
}

// ---------------------------------------------------------------------------
// Incremental decoding

Decoder::Decoder(const Model& m) : model_(m) { reset(); }

void Decoder::reset() {
  pos_ = 0;
  const auto& cfg = model_.config();
  k_cache_.assign(cfg.n_layers, {});
  v_cache_.assign(cfg.n_layers, {});
  for (auto& c : k_cache_) c.reserve(std::size_t(cfg.max_seq_len) * cfg.d_model);
  for (auto& c : v_cache_) c.reserve(std::size_t(cfg.max_seq_len) * cfg.d_model);
}

const std::vector<double>& Decoder::step(int token) {
  const auto& cfg = model_.config();
  if (pos_ >= cfg.max_seq_len)
    throw ContractError("decoder: sequence exceeds max_seq_len");
  if (token < 0 || token >= cfg.vocab)
    throw ContractError("decoder: token id out of range");
  const int d = cfg.d_model;
  const int heads = cfg.n_heads;
  const int dk = d / heads;
  const double att_scale = 1.0 / std::sqrt(double(dk));

  std::vector<double> x(d), a(d), q(d), att(d), f1(4 * d), f2(d);
  {
    const auto& tok = model_.param("tok_emb")->v;
    const auto& pos = model_.param("pos_emb")->v;
    for (int c = 0; c < d; ++c)
      x[c] = tok[std::size_t(token) * d + c] + pos[std::size_t(pos_) * d + c];
  }

  std::vector<double> probs(pos_ + 1);
  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    const std::string p = "layer" + std::to_string(layer) + ".";
    norm_rows(x.data(), model_.param(p + "ln1.g")->v.data(),
              model_.param(p + "ln1.b")->v.data(), 1, d, a.data());

    auto& kc = k_cache_[layer];
    auto& vc = v_cache_[layer];
    const std::size_t base = kc.size();
    kc.resize(base + d, 0.0);
    vc.resize(base + d, 0.0);
    std::fill(q.begin(), q.end(), 0.0);
    detail::gemm_acc(1, d, d, a.data(), model_.param(p + "wq")->v.data(), q.data());
    detail::gemm_acc(1, d, d, a.data(), model_.param(p + "wk")->v.data(), kc.data() + base);
    detail::gemm_acc(1, d, d, a.data(), model_.param(p + "wv")->v.data(), vc.data() + base);

    std::fill(att.begin(), att.end(), 0.0);
    for (int h = 0; h < heads; ++h) {
      for (int c = 0; c <= pos_; ++c) {
        const double* kr = kc.data() + std::size_t(c) * d + h * dk;
        const double* qr = q.data() + h * dk;
        double dot = 0.0;
        for (int e = 0; e < dk; ++e) dot += qr[e] * kr[e];
        probs[c] = dot * att_scale;
      }
      softmax_row(probs.data(), pos_ + 1);
      double* orow = att.data() + h * dk;
      for (int c = 0; c <= pos_; ++c) {
        const double* vr = vc.data() + std::size_t(c) * d + h * dk;
        const double pw = probs[c];
        for (int e = 0; e < dk; ++e) orow[e] += pw * vr[e];
      }
    }
    for (int c = 0; c < d; ++c) att[c] += x[c];

    norm_rows(att.data(), model_.param(p + "ln2.g")->v.data(),
              model_.param(p + "ln2.b")->v.data(), 1, d, a.data());
    std::fill(f1.begin(), f1.end(), 0.0);
    detail::gemm_acc(1, d, 4 * d, a.data(), model_.param(p + "w1")->v.data(), f1.data());
    add_bias_rows(f1.data(), model_.param(p + "b1")->v.data(), 1, 4 * d);
    relu_inplace(f1.data(), f1.size());
    std::fill(f2.begin(), f2.end(), 0.0);
    detail::gemm_acc(1, 4 * d, d, f1.data(), model_.param(p + "w2")->v.data(), f2.data());
    add_bias_rows(f2.data(), model_.param(p + "b2")->v.data(), 1, d);
    for (int c = 0; c < d; ++c) x[c] = f2[c] + att[c];
  }

  logits_.assign(cfg.vocab, 0.0);
  detail::gemm_acc(1, d, cfg.vocab, x.data(), model_.param("w_out")->v.data(),
                   logits_.data());
  ++pos_;
  return logits_;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
    throw SchemaError("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const Model& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::string cfg = m.config().to_json();
  write_u32(os, std::uint32_t(cfg.size()));
  os.write(cfg.data(), std::streamsize(cfg.size()));
  write_u32(os, std::uint32_t(m.params().size()));
  for (const auto& [name, t] : m.params()) {
    write_u32(os, std::uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    write_u32(os, std::uint32_t(t->rank()));
    for (int dshape : t->shape) write_u32(os, std::uint32_t(dshape));
    os.write(reinterpret_cast<const char*>(t->v.data()),
             std::streamsize(t->v.size() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing checkpoint '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[sizeof(kCheckpointMagic)];
  if (!is.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw SchemaError("checkpoint: bad magic");
  const auto cfg_len = read_u32(is);
  std::string cfg_text(cfg_len, '\0');
  if (!is.read(cfg_text.data(), cfg_len))
    throw SchemaError("checkpoint: truncated config");
  Model m(ModelConfig::from_json(cfg_text));

  const auto n_params = read_u32(is);
  if (n_params != m.params().size())
    throw SchemaError("checkpoint: parameter count mismatch");
  for (const auto& [name, t] : m.params()) {
    const auto name_len = read_u32(is);
    std::string got(name_len, '\0');
    if (!is.read(got.data(), name_len)) throw SchemaError("checkpoint: truncated name");
    if (got != name)
      throw SchemaError("checkpoint: expected parameter '" + name + "', found '" +
                        got + "'");
    const auto rank = read_u32(is);
    if (rank != std::uint32_t(t->rank()))
      throw SchemaError("checkpoint: rank mismatch for '" + name + "'");
    for (int dshape : t->shape)
      if (read_u32(is) != std::uint32_t(dshape))
        throw SchemaError("checkpoint: shape mismatch for '" + name + "'");
    if (!is.read(reinterpret_cast<char*>(t->v.data()),
                 std::streamsize(t->v.size() * sizeof(double))))
      throw SchemaError("checkpoint: truncated payload for '" + name + "'");
  }
  return m;
}

}  // namespace mtp
