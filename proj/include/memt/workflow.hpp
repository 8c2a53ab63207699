#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memt/checkpoint.hpp"
#include "memt/run_config.hpp"

namespace memt {

// High-level operations behind the CLI and the C API. Every JSON result
// carries the checkpoint's config hash.

nlohmann::json workflow_train(const RunConfig& rc);
nlohmann::json workflow_train_file(const std::string& config_path);

// data_path empty: falls back to <ckpt>/heldout.tsv, then to regenerating the
// task's held-out set. mem_size < 0 means "as trained".
nlohmann::json workflow_eval(const std::string& ckpt_dir, const std::string& data_path,
                             int mem_size);

nlohmann::json workflow_lesion(const std::string& ckpt_dir, const std::vector<int>& sizes,
                               const std::string& data_path);

nlohmann::json workflow_extend(const std::string& ckpt_dir, int add, int64_t finetune_steps,
                               const std::string& out_dir);

nlohmann::json workflow_bench(const std::vector<std::string>& variants,
                              const std::vector<int>& lengths, int m, int trials);

nlohmann::json workflow_dump_attn(const std::string& ckpt_dir, const std::string& input_line,
                                  const std::string& out_dir);

nlohmann::json workflow_analyze(const std::string& dump_dir, const std::string& out_dir);

// Greedy translation of one input line through a checkpoint.
std::string workflow_translate(const std::string& ckpt_dir, const std::string& input_line,
                               int max_out);

// Shared helpers (also used by tests).
DataSource data_source_for(const RunConfig& rc, const Vocab& vocab_src, const Vocab& vocab_tgt);
std::vector<Pair> load_eval_pairs(const std::string& path, const Vocab& vocab_src,
                                  const Vocab& vocab_tgt, const std::string& vocab_mode);
uint64_t lesion_seed_for(const ModelConfig& cfg);

}  // namespace memt
