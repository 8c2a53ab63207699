#include "memt/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace memt {

void TrainConfig::validate() const {
  if (warmup_steps < 1) throw config_error("warmup_steps must be >= 1");
  if (batch_size < 1) throw config_error("batch_size must be >= 1");
  if (steps < 0) throw config_error("steps must be >= 0");
}

double noam_lr(int64_t step, int d_model, int warmup_steps) {
  if (step < 1) throw contract_error("noam_lr: step must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

Adam::Adam(const std::vector<Parameter>& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params) {
    m_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0);
  }
}

void Adam::step(std::vector<Parameter>& params, double lr) {
  if (params.size() != m_.size()) throw contract_error("adam: parameter count changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = params[pi];
    auto& g = *p.tensor.grad;
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw error("adam: non-finite gradient in parameter " + p.name);
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      (*p.tensor.data)[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

Batch DataSource::batch_for_step(int64_t step, int batch_size) const {
  if (synthetic) {
    auto pairs = gen_task(kind, len_min, len_max, vocab_tgt, batch_size,
                          Rng::derive(seed, static_cast<uint64_t>(step) * 2 + 1));
    return batchify(pairs, batch_size, vocab_tgt, 0, false)[0];
  }
  if (train_pairs.empty()) throw contract_error("train: corpus is empty");
  const int64_t per_epoch =
      (static_cast<int64_t>(train_pairs.size()) + batch_size - 1) / batch_size;
  const int64_t epoch = step / per_epoch;
  if (epoch != cached_epoch_) {
    epoch_cache_ = batchify(train_pairs, batch_size, vocab_tgt,
                            Rng::derive(seed, 0x5a5a + static_cast<uint64_t>(epoch)), true);
    cached_epoch_ = epoch;
  }
  return epoch_cache_[static_cast<size_t>(step % per_epoch)];
}

namespace {

std::vector<int> strip_pads(const std::vector<int>& row, const std::vector<bool>& pad) {
  std::vector<int> out;
  for (size_t i = 0; i < row.size(); ++i)
    if (!pad[i]) out.push_back(row[i]);
  return out;
}

}  // namespace

Tensor batch_loss(const Model& model, const Batch& batch, ForwardCtx& ctx,
                  double* token_acc_out) {
  Tensor total;
  int64_t positions = 0, correct = 0;
  for (size_t b = 0; b < batch.src.size(); ++b) {
    const auto src = strip_pads(batch.src[b], batch.src_pad_flags[b]);
    const auto tgt_in = strip_pads(batch.tgt_in[b], batch.tgt_pad_flags[b]);
    auto tgt_out = batch.tgt_out[b];
    tgt_out.resize(tgt_in.size());  // same true length; tail pads dropped
    EncodeResult enc = model.encode(src, ctx);
    Tensor logits = model.decode(tgt_in, enc.h, ctx);
    const int64_t count = static_cast<int64_t>(tgt_out.size());
    Tensor seq_sum = scale(cross_entropy(logits, tgt_out, kPadId), static_cast<double>(count));
    total = (b == 0) ? seq_sum : add(total, seq_sum);
    positions += count;
    for (int64_t r = 0; r < count; ++r) {
      int best = 0;
      for (int c = 1; c < model.config().vocab_tgt; ++c)
        if (logits.at(r, c) > logits.at(r, best)) best = c;
      if (best == tgt_out[static_cast<size_t>(r)]) ++correct;
    }
  }
  if (token_acc_out)
    *token_acc_out = positions ? static_cast<double>(correct) / static_cast<double>(positions) : 0;
  return scale(total, 1.0 / static_cast<double>(positions));
}

namespace {

struct StepStats {
  double loss = 0.0;
  double token_acc = 0.0;
  bool finite = true;
};

// Same mean as batch_loss but backpropagates sequence by sequence, keeping the
// peak graph size at one sequence. Grad accumulation makes the two routes
// mathematically identical.
StepStats batch_backward(const Model& model, const Batch& batch, ForwardCtx& ctx) {
  StepStats stats;
  int64_t total = 0;
  for (size_t b = 0; b < batch.tgt_in.size(); ++b)
    for (size_t t = 0; t < batch.tgt_in[b].size(); ++t)
      if (!batch.tgt_pad_flags[b][t]) ++total;
  int64_t correct = 0;
  double loss_sum = 0.0;
  for (size_t b = 0; b < batch.src.size(); ++b) {
    const auto src = strip_pads(batch.src[b], batch.src_pad_flags[b]);
    const auto tgt_in = strip_pads(batch.tgt_in[b], batch.tgt_pad_flags[b]);
    auto tgt_out = batch.tgt_out[b];
    tgt_out.resize(tgt_in.size());
    EncodeResult enc = model.encode(src, ctx);
    Tensor logits = model.decode(tgt_in, enc.h, ctx);
    const int64_t count = static_cast<int64_t>(tgt_out.size());
    Tensor seq_loss = cross_entropy(logits, tgt_out, kPadId);
    const double v = seq_loss.scalar();
    if (!std::isfinite(v)) {
      stats.finite = false;
      return stats;
    }
    loss_sum += v * static_cast<double>(count);
    backward(scale(seq_loss, static_cast<double>(count) / static_cast<double>(total)));
    for (int64_t r = 0; r < count; ++r) {
      int best = 0;
      for (int c = 1; c < model.config().vocab_tgt; ++c)
        if (logits.at(r, c) > logits.at(r, best)) best = c;
      if (best == tgt_out[static_cast<size_t>(r)]) ++correct;
    }
  }
  stats.loss = loss_sum / static_cast<double>(total);
  stats.token_acc = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return stats;
}

}  // namespace

double token_accuracy(const Model& model, const std::vector<Pair>& pairs) {
  NoGradGuard no_grad;
  ForwardCtx ctx;
  const ModelConfig& cfg = model.config();
  int64_t positions = 0, correct = 0;
  for (const auto& [src, tgt] : pairs) {
    std::vector<int> tgt_in;
    for (int k = 0; k < cfg.m_dec; ++k) tgt_in.push_back(cfg.dec_mem_id(k));
    tgt_in.push_back(kBosId);
    tgt_in.insert(tgt_in.end(), tgt.begin(), tgt.end());
    std::vector<int> tgt_out(tgt_in.begin() + 1, tgt_in.end());
    tgt_out.push_back(kEosId);
    EncodeResult enc = model.encode(src, ctx);
    Tensor logits = model.decode(tgt_in, enc.h, ctx);
    for (size_t r = 0; r < tgt_out.size(); ++r) {
      int best = 0;
      for (int c = 1; c < cfg.vocab_tgt; ++c)
        if (logits.at(static_cast<int64_t>(r), c) > logits.at(static_cast<int64_t>(r), best))
          best = c;
      if (best == tgt_out[r]) ++correct;
      ++positions;
    }
  }
  return positions ? static_cast<double>(correct) / static_cast<double>(positions) : 0.0;
}

double eval_loss(const Model& model, const std::vector<Pair>& pairs) {
  if (pairs.empty()) throw contract_error("eval_loss: empty set");
  NoGradGuard no_grad;
  ForwardCtx ctx;
  const ModelConfig& cfg = model.config();
  double total = 0.0;
  int64_t positions = 0;
  for (const auto& [src, tgt] : pairs) {
    std::vector<int> tgt_in;
    for (int k = 0; k < cfg.m_dec; ++k) tgt_in.push_back(cfg.dec_mem_id(k));
    tgt_in.push_back(kBosId);
    tgt_in.insert(tgt_in.end(), tgt.begin(), tgt.end());
    std::vector<int> tgt_out(tgt_in.begin() + 1, tgt_in.end());
    tgt_out.push_back(kEosId);
    EncodeResult enc = model.encode(src, ctx);
    Tensor logits = model.decode(tgt_in, enc.h, ctx);
    const auto count = static_cast<double>(tgt_out.size());
    total += cross_entropy(logits, tgt_out, kPadId).scalar() * count;
    positions += static_cast<int64_t>(tgt_out.size());
  }
  return total / static_cast<double>(positions);
}

namespace {

struct NgramKey {
  std::vector<int> g;
  bool operator==(const NgramKey& o) const { return g == o.g; }
};

struct NgramHash {
  size_t operator()(const NgramKey& k) const {
    uint64_t h = 1469598103934665603ULL;
    for (int v : k.g) {
      h ^= static_cast<uint64_t>(v) + 0x9e3779b9ULL;
      h *= 1099511628211ULL;
    }
    return static_cast<size_t>(h);
  }
};

using NgramCounts = std::unordered_map<NgramKey, int64_t, NgramHash>;

NgramCounts count_ngrams(const std::vector<int>& toks, int n) {
  NgramCounts counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (size_t i = 0; i + static_cast<size_t>(n) <= toks.size(); ++i) {
    NgramKey k{std::vector<int>(toks.begin() + static_cast<int64_t>(i),
                                toks.begin() + static_cast<int64_t>(i) + n)};
    counts[k] += 1;
  }
  return counts;
}

}  // namespace

BleuResult corpus_bleu(const std::vector<std::vector<int>>& hyps,
                       const std::vector<std::vector<int>>& refs) {
  if (hyps.size() != refs.size()) throw contract_error("bleu: corpus size mismatch");
  if (hyps.empty()) throw contract_error("bleu: empty corpus");
  BleuResult res;
  int64_t clipped[4] = {0, 0, 0, 0};
  int64_t totals[4] = {0, 0, 0, 0};
  for (size_t i = 0; i < hyps.size(); ++i) {
    res.hyp_len += static_cast<int64_t>(hyps[i].size());
    res.ref_len += static_cast<int64_t>(refs[i].size());
    for (int n = 1; n <= 4; ++n) {
      NgramCounts h = count_ngrams(hyps[i], n);
      NgramCounts r = count_ngrams(refs[i], n);
      for (const auto& [key, c] : h) {
        auto it = r.find(key);
        clipped[n - 1] += std::min(c, it == r.end() ? 0 : it->second);
        totals[n - 1] += c;
      }
    }
  }
  double log_sum = 0.0;
  int used = 0;
  for (int n = 0; n < 4; ++n) {
    if (totals[n] == 0) {
      res.precisions[n] = 0.0;
      continue;  // no n-grams of this order anywhere; excluded from the mean
    }
    res.precisions[n] = static_cast<double>(clipped[n]) / static_cast<double>(totals[n]);
    log_sum += std::log(std::max(res.precisions[n], 1e-9));
    ++used;
  }
  res.brevity_penalty =
      res.hyp_len >= res.ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(res.ref_len) / static_cast<double>(res.hyp_len));
  if (res.hyp_len == 0) res.brevity_penalty = 0.0;
  res.bleu = used == 0 ? 0.0
                       : 100.0 * res.brevity_penalty * std::exp(log_sum / static_cast<double>(used));
  return res;
}

EvalMetrics evaluate(const Model& model, const std::vector<Pair>& data) {
  if (data.empty()) throw contract_error("evaluate: empty eval set");
  EvalMetrics m;
  m.pairs = static_cast<int64_t>(data.size());
  m.token_accuracy = token_accuracy(model, data);
  std::vector<std::vector<int>> hyps, refs;
  int64_t exact = 0;
  for (const auto& [src, tgt] : data) {
    auto hyp = model.greedy_decode(src, static_cast<int>(tgt.size()) + 10);
    if (hyp == tgt) ++exact;
    hyps.push_back(std::move(hyp));
    refs.push_back(tgt);
  }
  m.sequence_accuracy = static_cast<double>(exact) / static_cast<double>(data.size());
  m.bleu4 = corpus_bleu(hyps, refs).bleu;
  return m;
}

TrainResult train(Model& model, const DataSource& data, const TrainConfig& tc, Adam& optim,
                  std::ostream* metrics_out, const SaveHook& save_hook, int64_t start_step) {
  tc.validate();
  TrainResult res;
  res.steps_done = start_step;
  for (int64_t step = start_step + 1; step <= tc.steps; ++step) {
    Batch batch = data.batch_for_step(step - 1, tc.batch_size);
    Rng step_rng(Rng::derive(tc.seed, 0xd207 + static_cast<uint64_t>(step)));
    ForwardCtx ctx;
    ctx.training = true;
    ctx.rng = &step_rng;
    model.zero_grads();
    const StepStats stats = batch_backward(model, batch, ctx);
    const double loss_v = stats.loss;
    const double token_acc = stats.token_acc;
    if (!stats.finite) {
      res.diverged = true;
      break;
    }
    if (tc.grad_clip > 0.0) {
      double sq = 0.0;
      for (auto& p : model.params())
        for (double g : *p.tensor.grad) sq += g * g;
      const double norm = std::sqrt(sq);
      if (norm > tc.grad_clip) {
        const double f = tc.grad_clip / norm;
        for (auto& p : model.params())
          for (double& g : *p.tensor.grad) g *= f;
      }
    }
    const double lr = noam_lr(step, model.config().d_model, tc.warmup_steps);
    optim.step(model.params(), lr);
    res.steps_done = step;
    res.final_loss = loss_v;
    if (metrics_out) {
      nlohmann::json line = {
          {"step", step}, {"lr", lr}, {"loss", loss_v}, {"token_acc", token_acc}};
      (*metrics_out) << line.dump() << "\n";
    }
    if (tc.eval_every > 0 && step % tc.eval_every == 0) {
      if (!data.heldout.empty()) {
        res.heldout_token_acc = token_accuracy(model, data.heldout);
        if (metrics_out) {
          nlohmann::json line = {{"step", step}, {"heldout_token_acc", res.heldout_token_acc}};
          (*metrics_out) << line.dump() << "\n";
        }
      }
      if (save_hook) save_hook(step);
      if (tc.stop_token_acc > 0.0 && res.heldout_token_acc >= tc.stop_token_acc) break;
    }
  }
  if (!res.diverged && save_hook) save_hook(res.steps_done);
  return res;
}

}  // namespace memt
