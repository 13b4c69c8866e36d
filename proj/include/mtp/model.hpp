#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mtp/error.hpp"
#include "mtp/tensor.hpp"

namespace mtp {

// How predictions for tokens more than one step ahead are produced.
//   SharedTransfer:  one unembedding; step j >= 2 goes through a transfer map
//                    (linear map on logits, or a transformer stack on the
//                    hidden state followed by the shared unembedding).
//   IndependentHeads: a separate unembedding per step, nothing shared.
enum class HeadMode { SharedTransfer, IndependentHeads };
enum class TransferKind { Linear, TransformerStack };

struct ModelConfig {
  int vocab = 0;        // node count + 1 terminator
  int d_model = 64;
  int n_layers = 1;
  int n_heads = 1;
  int max_seq_len = 0;  // learned positions; longest sequence ever seen
  int k_tokens = 1;     // predict u_{n+1} .. u_{n+k}
  HeadMode head_mode = HeadMode::SharedTransfer;
  TransferKind transfer = TransferKind::Linear;
  int transfer_depth = 1;  // blocks per transformer-stack transfer
  bool nti = false;        // inject the true next token before steps j >= 2
  // Transfer-stack variant that treats slices of the hidden vector as a
  // pseudo-sequence of dim_token_width-wide tokens instead of a single token.
  bool dim_token_transfer = false;
  int dim_token_width = 8;

  void validate() const;  // throws ContractError
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);  // throws SchemaError
  bool operator==(const ModelConfig&) const = default;
};

// Compact architecture spec: "{K}tok[-ind|-linear|-tf{D}][-nti]", e.g.
// "1tok", "2tok-ind", "2tok-linear-nti", "3tok-tf2-nti". Parses into cfg
// (touching only head fields); model_spec() is the inverse.
void apply_model_spec(ModelConfig& cfg, const std::string& spec);
std::string model_spec(const ModelConfig& cfg);

// Decoder-only transformer with multi-step prediction heads.
//
// Block structure (pre-norm, no attention output projection):
//   Y   = X + concat_heads(softmax(Q K^T / sqrt(dk)) V),  QKV from LN1(X)
//   out = Y + FFN(LN2(Y)),  FFN = relu(. W1 + b1) W2 + b2, hidden 4 d_model
//
// Step-1 logits are H W_out. For steps j >= 2:
//   SharedTransfer  + Linear:           logits_j = (H~ W_out) T_j
//   SharedTransfer  + TransformerStack: logits_j = Stack_j(H~) W_out
//   IndependentHeads:                   logits_j = H W_out_j
// where H~ = H + k * emb(next token) when next-token injection is on
// (teacher forcing only; generation never uses steps >= 2).
class Model {
 public:
  explicit Model(ModelConfig cfg);

  void init_params(std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  // Ordered registry; iteration order is fixed and part of the contract
  // (optimizer state, checkpoints and reductions all follow it).
  const std::vector<std::pair<std::string, Tensor>>& params() const {
    return params_;
  }
  Tensor param(const std::string& name) const;  // throws ContractError

  // tokens is row-major (batch, length); padded positions may hold any id,
  // they are causally invisible to real positions.
  Tensor forward_hidden(Tape& tape, const std::vector<int>& tokens, int batch,
                        int length) const;

  // Teacher-forced logits for every step, each (batch, length, vocab).
  std::vector<Tensor> forward_steps(Tape& tape, const std::vector<int>& tokens,
                                    int batch, int length) const;

  // Sum over steps of the masked mean cross entropy: step j scores position
  // i against tokens[i + j] wherever i + j < lengths[b]. per_step receives
  // the K step values if non-null.
  Tensor loss(Tape& tape, const std::vector<int>& tokens, int batch, int length,
              const std::vector<int>& lengths,
              std::vector<double>* per_step = nullptr) const;

 private:
  ModelConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;

  Tensor block_forward(Tape& tape, Tensor x, const std::string& prefix,
                       const Tensor& mask, int batch, int length) const;
  Tensor stack_forward(Tape& tape, Tensor h, int step, int batch,
                       int length) const;

  friend struct ForwardTrace;
  friend class Decoder;
};

// Gradient-free full-sequence pass mirroring forward_hidden bit for bit,
// with attention weights captured for analysis.
struct ForwardTrace {
  int batch = 0;
  int length = 0;
  std::vector<double> hidden;  // batch*length*d_model
  std::vector<double> logits;  // step-1 logits, batch*length*vocab
  // attention[layer] is batch*heads*length*length, query-major rows.
  std::vector<std::vector<double>> attention;
};
ForwardTrace fast_forward(const Model& m, const std::vector<int>& tokens,
                          int batch, int length);

// Gradient-free incremental decoding with per-layer key/value caches.
// Produces exactly the numbers the full forward pass would, one token at a
// time; only the step-1 head is evaluated.
class Decoder {
 public:
  explicit Decoder(const Model& m);
  void reset();
  // Consume one token, return the step-1 logit row for its position.
  const std::vector<double>& step(int token);
  int position() const { return pos_; }

 private:
  const Model& model_;
  int pos_ = 0;
  std::vector<std::vector<double>> k_cache_;  // [layer] pos*d_model
  std::vector<std::vector<double>> v_cache_;
  std::vector<double> logits_;
};

// Single binary file: magic, config as embedded JSON, then raw parameter
// payloads in registry order. Byte-identical across runs for equal params.
void save_checkpoint(const Model& m, const std::string& path);  // IoError
Model load_checkpoint(const std::string& path);  // IoError / SchemaError

}  // namespace mtp
