#include "memt/model.hpp"

#include <algorithm>
#include <cmath>

#include "memt/tokens.hpp"

namespace memt {

namespace {

const char* kVariantNames[] = {"baseline",       "mem",
                               "mem_ctrl",       "mem_ctrl_shared",
                               "mem_bottleneck", "mem_bottleneck_skip"};

Tensor empty_mem(int64_t d) { return Tensor::zeros({0, d}); }

Tensor drop(const Tensor& t, const ModelConfig& cfg, ForwardCtx& ctx) {
  static thread_local Rng inert(0);
  if (ctx.training && !ctx.rng) throw contract_error("forward: training without an rng");
  return dropout(t, cfg.p_drop, ctx.training, ctx.training ? *ctx.rng : inert);
}

Tensor ff_forward(const Tensor& a, const FeedForwardWeights& w) {
  return add_row(matmul(relu(add_row(matmul(a, w.w1), w.b1)), w.w2), w.b2);
}

Tensor residual_norm(const Tensor& x, const Tensor& sublayer_out, const LayerNormWeights& ln,
                     const ModelConfig& cfg, ForwardCtx& ctx) {
  return layer_norm(add(x, drop(sublayer_out, cfg, ctx)), ln.gain, ln.bias);
}

void push_captures(ForwardCtx& ctx, Stage stage, int layer,
                   const std::vector<Tensor>& head_weights) {
  if (!ctx.capture || !ctx.sink) return;
  for (size_t hi = 0; hi < head_weights.size(); ++hi) {
    ctx.sink->push_back({stage, layer, static_cast<int>(hi), head_weights[hi]});
  }
}

}  // namespace

const char* variant_name(Variant v) { return kVariantNames[static_cast<int>(v)]; }

Variant variant_from_name(const std::string& s) {
  for (int i = 0; i < 6; ++i)
    if (s == kVariantNames[i]) return static_cast<Variant>(i);
  throw config_error("unknown variant '" + s + "'");
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::enc_self: return "enc_self";
    case Stage::enc_mem_stream: return "enc_mem_stream";
    case Stage::enc_seq_stream: return "enc_seq_stream";
    case Stage::dec_self: return "dec_self";
    case Stage::dec_cross: return "dec_cross";
  }
  return "?";
}

Stage stage_from_name(const std::string& s) {
  for (Stage st : {Stage::enc_self, Stage::enc_mem_stream, Stage::enc_seq_stream,
                   Stage::dec_self, Stage::dec_cross})
    if (s == stage_name(st)) return st;
  throw parse_error("unknown attention stage '" + s + "'");
}

void ModelConfig::validate() const {
  if (d_model <= 0 || d_ff <= 0 || h <= 0 || n_layers_enc <= 0 || n_layers_dec <= 0)
    throw config_error("model dimensions must be positive");
  if (d_model % h != 0) throw config_error("d_model must be divisible by heads");
  if (d_model % 2 != 0) throw config_error("d_model must be even (sinusoidal encoding)");
  if (p_drop < 0.0 || p_drop >= 1.0) throw config_error("p_drop must be in [0,1)");
  if (m_enc < 0 || m_dec < 0) throw config_error("memory sizes must be >= 0");
  if (variant == Variant::baseline && (m_enc != 0 || m_dec != 0))
    throw config_error("baseline variant requires m_enc == m_dec == 0");
  if ((variant == Variant::mem_bottleneck || variant == Variant::mem_bottleneck_skip) &&
      m_enc < 1)
    throw config_error("bottleneck variants require m_enc >= 1");
  if (vocab_src <= kReservedIds) throw config_error("vocab_src too small");
  if (vocab_tgt <= kReservedIds + m_dec) throw config_error("vocab_tgt too small for m_dec");
}

Tensor positional_encoding(int64_t positions, int64_t d_model) {
  Tensor pe = Tensor::zeros({positions, d_model});
  for (int64_t pos = 0; pos < positions; ++pos) {
    for (int64_t i = 0; i < d_model; i += 2) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      pe.at(pos, i) = std::sin(angle);
      pe.at(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

std::pair<Tensor, MemoryLayout> embed_and_position(const std::vector<int>& tokens,
                                                   const Tensor& embed_table,
                                                   const Tensor& mem_embeddings,
                                                   const ModelConfig& cfg, ForwardCtx& ctx) {
  (void)ctx;
  const int64_t m = mem_embeddings.shape[0];
  const int64_t n = static_cast<int64_t>(tokens.size());
  if (n > cfg.max_len - m) {
    throw contract_error("sequence of " + std::to_string(n) + " tokens plus " +
                         std::to_string(m) + " memory rows overflows max_len " +
                         std::to_string(cfg.max_len));
  }
  MemoryLayout layout{m, n};
  Tensor tok = scale(embedding(embed_table, tokens), std::sqrt(static_cast<double>(cfg.d_model)));
  tok = add(tok, positional_encoding(n, cfg.d_model));
  if (m == 0) return {tok, layout};
  Tensor mem = mem_embeddings;
  if (cfg.pe_on_memory) mem = add(mem, positional_encoding(m, cfg.d_model));
  return {concat_rows({mem, tok}), layout};
}

LayerActivations encoder_layer(const Tensor& x, const SublayerSet& w, const MemoryLayout& layout,
                               const ModelConfig& cfg, ForwardCtx& ctx, int layer_idx) {
  (void)layout;
  MultiHeadResult mh = multi_head(x, x, w.mha, nullptr, ctx.capture);
  push_captures(ctx, Stage::enc_self, layer_idx, mh.head_weights);
  Tensor a = residual_norm(x, mh.out, w.ln_attn, cfg, ctx);
  Tensor h = residual_norm(a, ff_forward(a, w.ff), w.ln_ff, cfg, ctx);
  LayerActivations acts;
  acts.a_seq = a;
  acts.h_seq = h;
  acts.h_full = h;
  return acts;
}

namespace {

// Shared steps 1-2: memory queries over the full concatenation.
void mem_stream_update(const Tensor& x_mem, const Tensor& x_full, const SublayerSet& w,
                       const ModelConfig& cfg, ForwardCtx& ctx, int layer_idx,
                       LayerActivations& acts) {
  MultiHeadResult mh = multi_head(x_mem, x_full, w.mha, nullptr, ctx.capture);
  push_captures(ctx, Stage::enc_mem_stream, layer_idx, mh.head_weights);
  acts.a_mem = residual_norm(x_mem, mh.out, w.ln_attn, cfg, ctx);
  acts.h_mem = residual_norm(acts.a_mem, ff_forward(acts.a_mem, w.ff), w.ln_ff, cfg, ctx);
}

}  // namespace

LayerActivations mem_ctrl_layer(const Tensor& x, const SublayerSet& w_mem,
                                const SublayerSet& w_seq, const MemoryLayout& layout,
                                const ModelConfig& cfg, ForwardCtx& ctx, int layer_idx) {
  Tensor x_mem = slice_rows(x, 0, layout.m);
  Tensor x_seq = slice_rows(x, layout.m, layout.total());
  LayerActivations acts;
  mem_stream_update(x_mem, x, w_mem, cfg, ctx, layer_idx, acts);
  MultiHeadResult mh = multi_head(x_seq, x, w_seq.mha, nullptr, ctx.capture);
  push_captures(ctx, Stage::enc_seq_stream, layer_idx, mh.head_weights);
  acts.a_seq = residual_norm(x_seq, mh.out, w_seq.ln_attn, cfg, ctx);
  acts.h_seq = residual_norm(acts.a_seq, ff_forward(acts.a_seq, w_seq.ff), w_seq.ln_ff, cfg, ctx);
  acts.h_full = concat_rows({acts.h_mem, acts.h_seq});
  return acts;
}

Tensor bottleneck_seq_update(const Tensor& x_seq, const Tensor& kv, const SublayerSet& w_seq,
                             const ModelConfig& cfg, ForwardCtx& ctx, int layer_idx) {
  MultiHeadResult mh = multi_head(x_seq, kv, w_seq.mha, nullptr, ctx.capture);
  push_captures(ctx, Stage::enc_seq_stream, layer_idx, mh.head_weights);
  Tensor a = residual_norm(x_seq, mh.out, w_seq.ln_attn, cfg, ctx);
  return residual_norm(a, ff_forward(a, w_seq.ff), w_seq.ln_ff, cfg, ctx);
}

LayerActivations mem_bottleneck_layer(const Tensor& x, const SublayerSet& w_mem,
                                      const SublayerSet& w_seq, const MemoryLayout& layout,
                                      const ModelConfig& cfg, ForwardCtx& ctx, int layer_idx) {
  if (layout.m < 1) throw config_error("mem_bottleneck_layer: memory size must be >= 1");
  Tensor x_mem = slice_rows(x, 0, layout.m);
  Tensor x_seq = slice_rows(x, layout.m, layout.total());
  LayerActivations acts;
  mem_stream_update(x_mem, x, w_mem, cfg, ctx, layer_idx, acts);
  const Tensor& kv = cfg.bottleneck_kv == BottleneckKv::post ? acts.h_mem : x_mem;
  MultiHeadResult mh = multi_head(x_seq, kv, w_seq.mha, nullptr, ctx.capture);
  push_captures(ctx, Stage::enc_seq_stream, layer_idx, mh.head_weights);
  acts.a_seq = residual_norm(x_seq, mh.out, w_seq.ln_attn, cfg, ctx);
  acts.h_seq = residual_norm(acts.a_seq, ff_forward(acts.a_seq, w_seq.ff), w_seq.ln_ff, cfg, ctx);
  acts.h_full = concat_rows({acts.h_mem, acts.h_seq});
  return acts;
}

LayerActivations mem_bottleneck_skip_layer(const Tensor& x, const SublayerSet& w_mem,
                                           const MemoryLayout& layout, const ModelConfig& cfg,
                                           ForwardCtx& ctx, int layer_idx) {
  if (layout.m < 1) throw config_error("mem_bottleneck_skip_layer: memory size must be >= 1");
  Tensor x_mem = slice_rows(x, 0, layout.m);
  Tensor x_seq = slice_rows(x, layout.m, layout.total());
  LayerActivations acts;
  mem_stream_update(x_mem, x, w_mem, cfg, ctx, layer_idx, acts);
  acts.h_seq = x_seq;  // sequence representations pass through untouched
  acts.h_full = concat_rows({acts.h_mem, acts.h_seq});
  return acts;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg), init_rng_(cfg.seed) {
  cfg_.validate();
  build_params();
}

Tensor Model::reg(const std::string& name, std::vector<int64_t> shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.requires_grad = true;
  t.grad = std::make_shared<std::vector<double>>(static_cast<size_t>(t.numel()), 0.0);
  params_.push_back({name, t});
  return t;
}

namespace {

void fill_xavier(Tensor& t, Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(t.shape[0] + t.shape[t.rank() - 1]));
  for (double& v : *t.data) v = rng.uniform(-limit, limit);
}

void fill_embed(Tensor& t, Rng& rng, int d_model) {
  const double std = 1.0 / std::sqrt(static_cast<double>(d_model));
  for (double& v : *t.data) v = rng.normal(0.0, std);
}

void fill_ones(Tensor& t) { std::fill(t.data->begin(), t.data->end(), 1.0); }

}  // namespace

void Model::build_params() {
  const int64_t d = cfg_.d_model;
  const int64_t dff = cfg_.d_ff;

  auto linear = [&](const std::string& name, int64_t in, int64_t out) {
    Tensor w = reg(name, {in, out});
    fill_xavier(w, init_rng_);
    return w;
  };
  auto mha = [&](const std::string& prefix) {
    MultiHeadWeights w;
    w.wq = linear(prefix + ".wq", d, d);
    w.wk = linear(prefix + ".wk", d, d);
    w.wv = linear(prefix + ".wv", d, d);
    w.wo = linear(prefix + ".wo", d, d);
    w.h = cfg_.h;
    return w;
  };
  auto ff = [&](const std::string& prefix) {
    FeedForwardWeights w;
    w.w1 = linear(prefix + ".w1", d, dff);
    w.b1 = reg(prefix + ".b1", {dff});
    w.w2 = linear(prefix + ".w2", dff, d);
    w.b2 = reg(prefix + ".b2", {d});
    return w;
  };
  auto ln = [&](const std::string& prefix) {
    LayerNormWeights w;
    w.gain = reg(prefix + ".gain", {d});
    fill_ones(w.gain);
    w.bias = reg(prefix + ".bias", {d});
    return w;
  };
  auto sublayer_set = [&](const std::string& prefix) {
    SublayerSet s;
    s.mha = mha(prefix + ".mha");
    s.ff = ff(prefix + ".ff");
    s.ln_attn = ln(prefix + ".ln1");
    s.ln_ff = ln(prefix + ".ln2");
    return s;
  };

  src_embed_ = reg("src_embed", {cfg_.vocab_src, d});
  fill_embed(src_embed_, init_rng_, cfg_.d_model);
  tgt_embed_ = reg("tgt_embed", {cfg_.vocab_tgt, d});
  fill_embed(tgt_embed_, init_rng_, cfg_.d_model);

  if (cfg_.variant != Variant::baseline) {
    mem_embed_ = reg("enc.mem_embed", {cfg_.m_enc, d});
    fill_embed(mem_embed_, init_rng_, cfg_.d_model);
  } else {
    mem_embed_ = empty_mem(d);
  }

  SublayerSet shared_mem;
  if (cfg_.variant == Variant::mem_ctrl_shared) shared_mem = sublayer_set("enc.shared_mem");

  for (int l = 0; l < cfg_.n_layers_enc; ++l) {
    const std::string p = "enc.l" + std::to_string(l);
    switch (cfg_.variant) {
      case Variant::baseline:
      case Variant::mem:
        enc_self_.push_back(sublayer_set(p + ".self"));
        break;
      case Variant::mem_ctrl:
        enc_mem_.push_back(sublayer_set(p + ".mem"));
        enc_seq_.push_back(sublayer_set(p + ".seq"));
        break;
      case Variant::mem_ctrl_shared:
        enc_mem_.push_back(shared_mem);  // same tensors in every layer
        enc_seq_.push_back(sublayer_set(p + ".seq"));
        break;
      case Variant::mem_bottleneck:
        enc_mem_.push_back(sublayer_set(p + ".mem"));
        enc_seq_.push_back(sublayer_set(p + ".seq"));
        break;
      case Variant::mem_bottleneck_skip:
        enc_mem_.push_back(sublayer_set(p + ".mem"));
        break;
    }
  }

  for (int l = 0; l < cfg_.n_layers_dec; ++l) {
    const std::string p = "dec.l" + std::to_string(l);
    DecoderLayerWeights w;
    w.self = mha(p + ".self");
    w.ln_self = ln(p + ".ln1");
    w.cross = mha(p + ".cross");
    w.ln_cross = ln(p + ".ln2");
    w.ff = ff(p + ".ff");
    w.ln_ff = ln(p + ".ln3");
    dec_.push_back(w);
  }

  out_w_ = linear("out.w", d, cfg_.vocab_tgt);
  out_b_ = reg("out.b", {cfg_.vocab_tgt});
}

Parameter* Model::find_param(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Model Model::clone() const {
  Model copy(cfg_);
  for (size_t i = 0; i < params_.size(); ++i) {
    *copy.params_[i].tensor.data = *params_[i].tensor.data;
  }
  return copy;
}

void Model::zero_grads() {
  for (auto& p : params_) p.tensor.zero_grad();
}

EncodeResult Model::encode(const std::vector<int>& src_tokens, ForwardCtx& ctx) const {
  if (src_tokens.empty()) throw contract_error("encode: empty token sequence");
  auto [x, layout] = embed_and_position(src_tokens, src_embed_, mem_embed_, cfg_, ctx);
  for (int l = 0; l < cfg_.n_layers_enc; ++l) {
    LayerActivations acts;
    switch (cfg_.variant) {
      case Variant::baseline:
      case Variant::mem:
        acts = encoder_layer(x, enc_self_[static_cast<size_t>(l)], layout, cfg_, ctx, l);
        break;
      case Variant::mem_ctrl:
      case Variant::mem_ctrl_shared:
        acts = mem_ctrl_layer(x, enc_mem_[static_cast<size_t>(l)],
                              enc_seq_[static_cast<size_t>(l)], layout, cfg_, ctx, l);
        break;
      case Variant::mem_bottleneck:
        acts = mem_bottleneck_layer(x, enc_mem_[static_cast<size_t>(l)],
                                    enc_seq_[static_cast<size_t>(l)], layout, cfg_, ctx, l);
        break;
      case Variant::mem_bottleneck_skip:
        acts = mem_bottleneck_skip_layer(x, enc_mem_[static_cast<size_t>(l)], layout, cfg_,
                                         ctx, l);
        break;
    }
    x = acts.h_full;
  }
  return {x, layout};
}

Tensor Model::decode(const std::vector<int>& tgt_tokens, const Tensor& enc_out,
                     ForwardCtx& ctx) const {
  if (tgt_tokens.empty()) throw contract_error("decode: empty target sequence");
  auto [x, layout] = embed_and_position(tgt_tokens, tgt_embed_, empty_mem(cfg_.d_model), cfg_, ctx);
  (void)layout;
  const AttentionMask causal = make_causal_mask(static_cast<int64_t>(tgt_tokens.size()));
  for (int l = 0; l < cfg_.n_layers_dec; ++l) {
    const DecoderLayerWeights& w = dec_[static_cast<size_t>(l)];
    MultiHeadResult mh_self = multi_head(x, x, w.self, &causal, ctx.capture);
    push_captures(ctx, Stage::dec_self, l, mh_self.head_weights);
    Tensor a = residual_norm(x, mh_self.out, w.ln_self, cfg_, ctx);
    MultiHeadResult mh_cross = multi_head(a, enc_out, w.cross, nullptr, ctx.capture);
    push_captures(ctx, Stage::dec_cross, l, mh_cross.head_weights);
    Tensor b = residual_norm(a, mh_cross.out, w.ln_cross, cfg_, ctx);
    x = residual_norm(b, ff_forward(b, w.ff), w.ln_ff, cfg_, ctx);
  }
  return add_row(matmul(x, out_w_), out_b_);
}

std::vector<int> Model::greedy_decode(const std::vector<int>& src_tokens, int max_out) const {
  NoGradGuard no_grad;
  ForwardCtx ctx;
  EncodeResult enc = encode(src_tokens, ctx);
  std::vector<int> seq;
  for (int k = 0; k < cfg_.m_dec; ++k) seq.push_back(cfg_.dec_mem_id(k));
  seq.push_back(kBosId);
  std::vector<int> out;
  for (int t = 0; t < max_out; ++t) {
    if (static_cast<int>(seq.size()) >= cfg_.max_len) break;  // position budget
    Tensor logits = decode(seq, enc.h, ctx);
    const int64_t last = logits.shape[0] - 1;
    int best = 0;
    double best_v = logits.at(last, 0);
    for (int c = 1; c < cfg_.vocab_tgt; ++c) {
      if (logits.at(last, c) > best_v) {
        best_v = logits.at(last, c);
        best = c;
      }
    }
    if (best == kEosId) break;
    seq.push_back(best);
    if (best == kBosId || (cfg_.m_dec > 0 && best >= cfg_.vocab_tgt - cfg_.m_dec)) continue;
    out.push_back(best);
  }
  return out;
}

Model lesion_memory(const Model& model, int new_m, uint64_t init_seed) {
  const ModelConfig& cfg = model.config();
  if (cfg.variant == Variant::baseline)
    throw config_error("lesion_memory: baseline model has no memory");
  if (new_m < 0) throw config_error("lesion_memory: new_m must be >= 0");
  if ((cfg.variant == Variant::mem_bottleneck || cfg.variant == Variant::mem_bottleneck_skip) &&
      new_m == 0)
    throw config_error("lesion_memory: bottleneck variants require new_m >= 1");

  ModelConfig lesioned_cfg = cfg;
  lesioned_cfg.m_enc = new_m;
  Model out(lesioned_cfg);
  for (size_t i = 0; i < out.params().size(); ++i) {
    Parameter& dst = out.params()[i];
    if (dst.name == "enc.mem_embed") continue;
    const auto& src = model.params()[i];
    *dst.tensor.data = *src.tensor.data;
  }
  Parameter* dst_mem = out.find_param("enc.mem_embed");
  const Tensor& src_mem = model.mem_embed();
  const int64_t d = cfg.d_model;
  const int64_t keep = std::min<int64_t>(new_m, src_mem.shape[0]);
  for (int64_t r = 0; r < keep; ++r)
    for (int64_t c = 0; c < d; ++c) dst_mem->tensor.at(r, c) = src_mem.at(r, c);
  if (new_m > src_mem.shape[0]) {
    Rng rng(init_seed);
    const double std = 1.0 / std::sqrt(static_cast<double>(d));
    for (int64_t r = src_mem.shape[0]; r < new_m; ++r)
      for (int64_t c = 0; c < d; ++c) dst_mem->tensor.at(r, c) = rng.normal(0.0, std);
  }
  return out;
}

}  // namespace memt
