#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "memt/data.hpp"
#include "memt/model.hpp"
#include "memt/train.hpp"

namespace memt {

// Checkpoint directory layout:
//   manifest.json  config, vocabularies, step, parameter index
//   params.bin     little-endian f32 values, concatenated in index order
//   optim.bin      f64 parameter masters + Adam state + rng snapshot
// params.bin is the portable surface; optim.bin restores training bit-exactly.
void save_checkpoint(const std::string& dir, const Model& model, const Vocab& vocab_src,
                     const Vocab& vocab_tgt, const std::map<std::string, std::string>& run_config,
                     int64_t step, const Adam* optim);

struct LoadedCheckpoint {
  Model model;
  Vocab vocab_src, vocab_tgt;
  std::map<std::string, std::string> run_config;
  int64_t step = 0;
  bool has_optim = false;
  int64_t adam_t = 0;
  std::vector<std::vector<double>> adam_m, adam_v;
  std::string config_hash;

  explicit LoadedCheckpoint(Model m) : model(std::move(m)) {}
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

uint64_t fnv1a64(const std::string& s);
std::string hash_hex(uint64_t h);

std::string model_config_hash(const ModelConfig& cfg,
                              const std::map<std::string, std::string>& run_config);

}  // namespace memt
