#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memt/model.hpp"
#include "memt/train.hpp"

namespace memt {

struct ReportRow {
  std::string setting;
  std::map<std::string, double> metrics;
  std::string note;  // e.g. "not applicable"
};

struct ExperimentReport {
  std::string kind;
  std::string checkpoint_id;
  std::string checkpoint_hash;
  uint64_t seed = 0;
  std::vector<ReportRow> rows;  // sorted by setting
  std::string environment;

  nlohmann::json to_json() const;
  // Aligned-column text rendering, one row per setting.
  std::string to_table() const;
  // Stable across reruns with identical inputs.
  std::string content_hash() const;
};

std::string environment_stamp();

// Evaluates the model at each inference memory size; the trained-m row is a
// plain evaluation of the unmodified model.
ExperimentReport lesion_grid(const Model& model, const std::vector<int>& sizes,
                             const std::vector<Pair>& eval_data, const std::string& checkpoint_id,
                             const std::string& checkpoint_hash, uint64_t lesion_init_seed);

struct ExtensionResult {
  Model model;
  ExperimentReport report;

  ExtensionResult(Model m, ExperimentReport r) : model(std::move(m)), report(std::move(r)) {}
};

// Appends `add` fresh memory embeddings, then fine-tunes every parameter.
ExtensionResult extend_memory(const Model& model, int add, int64_t finetune_steps,
                              uint64_t init_seed, const DataSource& data, const TrainConfig& tc,
                              const std::string& checkpoint_id,
                              const std::string& checkpoint_hash);

struct BenchDims {
  int n_layers = 2;
  int d_model = 32;
  int d_ff = 128;
  int h = 4;
};

// Attention-score multiply-adds per encoder layer at sequence length n:
//   full self-attention: (n+m)^2 * d_model
//   bottleneck:          m*(m+n)*d_model + n*m*d_model  (skip drops the n*m term)
int64_t attention_score_madds(Variant v, int64_t n, int64_t m, int64_t d_model);

// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

// Analytic score counts plus measured forward wall times over the lengths,
// with fitted log-log slopes per variant.
ExperimentReport complexity_bench(const std::vector<Variant>& variants,
                                  const std::vector<int>& lengths, int m, int trials,
                                  const BenchDims& dims);

}  // namespace memt
