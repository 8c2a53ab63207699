#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "memt/model.hpp"

namespace memt {

// Flat key=value run description. Every key has a default except out_dir;
// unknown keys are hard errors so misspellings cannot silently fall back.
struct RunConfig {
  std::string variant = "baseline";
  int n_layers_enc = 4;
  int n_layers_dec = 4;
  int d_model = 128;
  int d_ff = 512;
  int heads = 8;
  double p_drop = 0.1;
  int m_enc = 0;
  int m_dec = 0;
  bool pe_on_memory = false;
  std::string bottleneck_kv = "post";
  std::string task = "copy";  // cleared when corpus_path is set
  std::string corpus_path;
  std::string vocab_mode = "word";
  int len_min = 2;
  int len_max = 16;
  int vocab_size = 20;
  int batch_size = 64;
  int64_t steps = 1000;
  int warmup_steps = 4000;
  uint64_t seed = 1;
  std::string out_dir;

  void validate_for_train() const;  // requires out_dir
  std::map<std::string, std::string> as_map() const;
  ModelConfig model_config(int vocab_src, int vocab_tgt, int max_len) const;
};

RunConfig parse_run_config(const std::string& path);
RunConfig run_config_from_map(const std::map<std::string, std::string>& kv);

}  // namespace memt
