#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "memt/data.hpp"
#include "memt/model.hpp"

namespace memt {

struct TrainConfig {
  int64_t steps = 1000;
  int batch_size = 64;
  int warmup_steps = 4000;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  double grad_clip = 0.0;  // 0 disables clipping
  int64_t eval_every = 200;
  // Early stop once held-out token accuracy reaches this; <0 disables.
  double stop_token_acc = -1.0;
  uint64_t seed = 1;

  void validate() const;
};

// d^-0.5 * min(step^-0.5, step * warmup^-1.5); steps are 1-based.
double noam_lr(int64_t step, int d_model, int warmup_steps);

class Adam {
 public:
  Adam(const std::vector<Parameter>& params, double beta1, double beta2, double eps);

  // Applies one update from the parameters' accumulated grads.
  void step(std::vector<Parameter>& params, double lr);

  int64_t t() const { return t_; }
  void set_t(int64_t t) { t_ = t; }
  std::vector<std::vector<double>>& m() { return m_; }
  std::vector<std::vector<double>>& v() { return v_; }
  const std::vector<std::vector<double>>& m() const { return m_; }
  const std::vector<std::vector<double>>& v() const { return v_; }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Training data seen as a deterministic function of the step index: synthetic
// tasks draw a fresh batch per step, corpora reshuffle per epoch.
struct DataSource {
  bool synthetic = true;
  TaskKind kind = TaskKind::copy;
  int len_min = 2;
  int len_max = 16;
  std::vector<Pair> train_pairs;  // corpus mode
  std::vector<Pair> heldout;
  Vocab vocab_src, vocab_tgt;
  uint64_t seed = 1;

  Batch batch_for_step(int64_t step, int batch_size) const;

 private:
  mutable std::vector<Batch> epoch_cache_;
  mutable int64_t cached_epoch_ = -1;
};

struct TrainResult {
  int64_t steps_done = 0;
  double final_loss = 0.0;
  double heldout_token_acc = -1.0;
  bool diverged = false;
};

// Teacher-forced loss over one batch; identical to padded-batch cross-entropy
// with PAD ignored. Also reports argmax token accuracy on the batch.
Tensor batch_loss(const Model& model, const Batch& batch, ForwardCtx& ctx,
                  double* token_acc_out);

// Teacher-forced token accuracy (no decoding).
double token_accuracy(const Model& model, const std::vector<Pair>& pairs);

// Teacher-forced mean cross-entropy over all target positions of the set.
double eval_loss(const Model& model, const std::vector<Pair>& pairs);

struct BleuResult {
  double bleu = 0.0;             // 0..100
  double precisions[4] = {0, 0, 0, 0};
  double brevity_penalty = 1.0;
  int64_t hyp_len = 0, ref_len = 0;
};

// Corpus-level BLEU-4: clipped n-gram precisions, brevity penalty, and
// add-epsilon (1e-9) smoothing of zero precisions. Orders of n whose hypothesis
// n-gram count is zero corpus-wide are left out of the geometric mean.
BleuResult corpus_bleu(const std::vector<std::vector<int>>& hyps,
                       const std::vector<std::vector<int>>& refs);

struct EvalMetrics {
  double token_accuracy = 0.0;
  double sequence_accuracy = 0.0;
  double bleu4 = 0.0;
  int64_t pairs = 0;
};

// Greedy-decodes every pair for sequence accuracy and BLEU; token accuracy is
// teacher-forced.
EvalMetrics evaluate(const Model& model, const std::vector<Pair>& data);

using SaveHook = std::function<void(int64_t step)>;

TrainResult train(Model& model, const DataSource& data, const TrainConfig& tc, Adam& optim,
                  std::ostream* metrics_out, const SaveHook& save_hook, int64_t start_step = 0);

}  // namespace memt
