#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memt/attention.hpp"
#include "memt/tensor.hpp"

namespace memt {

enum class Variant {
  baseline,
  mem,
  mem_ctrl,
  mem_ctrl_shared,
  mem_bottleneck,
  mem_bottleneck_skip,
};

// Key/value source for the bottleneck sequence update: the updated memory
// (post) or the layer's input memory (pre). The two published descriptions
// of the architecture differ here; post is the default.
enum class BottleneckKv { pre, post };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::baseline;
  int n_layers_enc = 4;
  int n_layers_dec = 4;
  int d_model = 128;
  int d_ff = 512;
  int h = 8;
  double p_drop = 0.1;
  int m_enc = 0;
  int m_dec = 0;
  int vocab_src = 0;
  int vocab_tgt = 0;
  int max_len = 4096;
  bool pe_on_memory = false;
  BottleneckKv bottleneck_kv = BottleneckKv::post;
  uint64_t seed = 1;

  bool uses_memory_streams() const {
    return variant == Variant::mem_ctrl || variant == Variant::mem_ctrl_shared ||
           variant == Variant::mem_bottleneck || variant == Variant::mem_bottleneck_skip;
  }
  // Decoder [mem] ids sit at the top of the target vocabulary.
  int dec_mem_id(int k) const { return vocab_tgt - m_dec + k; }
  void validate() const;
};

// Where memory rows live inside a concatenated activation: [0,m) memory,
// [m,m+n) sequence.
struct MemoryLayout {
  int64_t m = 0;
  int64_t n = 0;
  int64_t total() const { return m + n; }
};

enum class Stage { enc_self, enc_mem_stream, enc_seq_stream, dec_self, dec_cross };
const char* stage_name(Stage s);
Stage stage_from_name(const std::string& s);

struct AttentionCapture {
  Stage stage;
  int layer = 0;
  int head = 0;
  Tensor weights;  // detached [rows, cols]
};

// Per-call forward state: training toggles dropout, capture fills sink.
struct ForwardCtx {
  bool training = false;
  bool capture = false;
  Rng* rng = nullptr;  // required when training
  std::vector<AttentionCapture>* sink = nullptr;
};

struct FeedForwardWeights {
  Tensor w1, b1, w2, b2;  // d -> d_ff -> d
};

struct LayerNormWeights {
  Tensor gain, bias;
};

// One attention sublayer plus its feed-forward: the unit both ordinary layers
// and the memory/sequence streams are assembled from.
struct SublayerSet {
  MultiHeadWeights mha;
  FeedForwardWeights ff;
  LayerNormWeights ln_attn;
  LayerNormWeights ln_ff;
};

struct DecoderLayerWeights {
  MultiHeadWeights self;
  LayerNormWeights ln_self;
  MultiHeadWeights cross;
  LayerNormWeights ln_cross;
  FeedForwardWeights ff;
  LayerNormWeights ln_ff;
};

struct LayerActivations {
  Tensor a_mem, h_mem;  // empty for variants without a distinct memory stream
  Tensor a_seq, h_seq;
  Tensor h_full;  // [m+n, d]
};

// ---- layer ops ----

LayerActivations encoder_layer(const Tensor& x, const SublayerSet& w, const MemoryLayout& layout,
                               const ModelConfig& cfg, ForwardCtx& ctx, int layer_idx);
LayerActivations mem_ctrl_layer(const Tensor& x, const SublayerSet& w_mem,
                                const SublayerSet& w_seq, const MemoryLayout& layout,
                                const ModelConfig& cfg, ForwardCtx& ctx, int layer_idx);
LayerActivations mem_bottleneck_layer(const Tensor& x, const SublayerSet& w_mem,
                                      const SublayerSet& w_seq, const MemoryLayout& layout,
                                      const ModelConfig& cfg, ForwardCtx& ctx, int layer_idx);
LayerActivations mem_bottleneck_skip_layer(const Tensor& x, const SublayerSet& w_mem,
                                           const MemoryLayout& layout, const ModelConfig& cfg,
                                           ForwardCtx& ctx, int layer_idx);

// Steps 3-4 of the bottleneck layer against an arbitrary key/value block;
// exposed so information-flow probes can freeze the memory stream.
Tensor bottleneck_seq_update(const Tensor& x_seq, const Tensor& kv, const SublayerSet& w_seq,
                             const ModelConfig& cfg, ForwardCtx& ctx, int layer_idx);

// Sinusoidal position encoding rows [positions, d_model].
Tensor positional_encoding(int64_t positions, int64_t d_model);

// Memory rows (optionally position-encoded) above sqrt(d)-scaled, position-
// encoded token embeddings. Sequence positions restart at zero after the
// memory block so the sequence encoding is independent of m.
std::pair<Tensor, MemoryLayout> embed_and_position(const std::vector<int>& tokens,
                                                   const Tensor& embed_table,
                                                   const Tensor& mem_embeddings,
                                                   const ModelConfig& cfg, ForwardCtx& ctx);

struct EncodeResult {
  Tensor h;  // [m+n, d_model]
  MemoryLayout layout;
};

class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  Parameter* find_param(const std::string& name);
  const Tensor& mem_embed() const { return mem_embed_; }

  // Deep copy (fresh buffers, same values).
  Model clone() const;

  EncodeResult encode(const std::vector<int>& src_tokens, ForwardCtx& ctx) const;
  // tgt_tokens already carry the m_dec [mem] ids and BOS; causal self-attention
  // over the whole target, cross-attention over every encoder row.
  Tensor decode(const std::vector<int>& tgt_tokens, const Tensor& enc_out, ForwardCtx& ctx) const;

  // Greedy autoregressive decode; returns generated ids with [mem] ids, BOS
  // and EOS stripped.
  std::vector<int> greedy_decode(const std::vector<int>& src_tokens, int max_out) const;

  void zero_grads();

  const std::vector<SublayerSet>& enc_self() const { return enc_self_; }
  const std::vector<SublayerSet>& enc_mem_stream() const { return enc_mem_; }
  const std::vector<SublayerSet>& enc_seq_stream() const { return enc_seq_; }

 private:
  friend Model lesion_memory(const Model& model, int new_m, uint64_t init_seed);

  void build_params();
  Tensor reg(const std::string& name, std::vector<int64_t> shape);

  ModelConfig cfg_;
  std::vector<Parameter> params_;
  Rng init_rng_;

  Tensor src_embed_, tgt_embed_, mem_embed_;
  std::vector<SublayerSet> enc_self_;             // baseline / mem
  std::vector<SublayerSet> enc_mem_, enc_seq_;    // ctrl / bottleneck streams
  std::vector<DecoderLayerWeights> dec_;
  Tensor out_w_, out_b_;
};

// Changes the encoder memory size of a trained model: shrinking keeps the
// leading rows, growing appends rows drawn from the init distribution with
// the given seed. Every other weight is untouched.
Model lesion_memory(const Model& model, int new_m, uint64_t init_seed);

}  // namespace memt
