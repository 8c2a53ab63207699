#include "memt/c_api.h"

#include <cstring>
#include <sstream>
#include <string>
#include <vector>

#include "memt/checkpoint.hpp"
#include "memt/workflow.hpp"

using namespace memt;

struct mt_checkpoint {
  std::string dir;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<int> parse_int_csv(const char* csv) {
  std::vector<int> out;
  if (!csv) return out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  return out;
}

std::vector<std::string> parse_str_csv(const char* csv) {
  std::vector<std::string> out;
  if (!csv) return out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// config/parse problems are usage errors (2); anything else is runtime (3).
template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    return MT_OK;
  } catch (const config_error& e) {
    g_last_error = e.what();
    return MT_ERR_CONFIG;
  } catch (const parse_error& e) {
    g_last_error = e.what();
    return MT_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MT_ERR_RUNTIME;
  }
}

}  // namespace

extern "C" {

const char* mt_version(void) { return "memt 1.0"; }

const char* mt_last_error(void) { return g_last_error.c_str(); }

void mt_string_free(char* s) { std::free(s); }

int mt_train(const char* config_path, char** json_out) {
  return guarded([&] {
    if (!config_path) throw config_error("mt_train: config_path is null");
    auto result = workflow_train_file(config_path);
    if (json_out) *json_out = dup_string(result.dump(2));
  });
}

mt_checkpoint* mt_checkpoint_open(const char* dir) {
  mt_checkpoint* out = nullptr;
  const int rc = guarded([&] {
    if (!dir) throw config_error("mt_checkpoint_open: dir is null");
    load_checkpoint(dir);  // validate now so later calls cannot half-fail
    out = new mt_checkpoint{dir};
  });
  return rc == MT_OK ? out : nullptr;
}

void mt_checkpoint_close(mt_checkpoint* ckpt) { delete ckpt; }

int mt_eval(mt_checkpoint* ckpt, const char* data_path, int mem_size, char** json_out) {
  return guarded([&] {
    if (!ckpt) throw config_error("mt_eval: checkpoint is null");
    auto result = workflow_eval(ckpt->dir, data_path ? data_path : "", mem_size);
    if (json_out) *json_out = dup_string(result.dump(2));
  });
}

int mt_lesion(mt_checkpoint* ckpt, const char* sizes_csv, const char* data_path,
              char** json_out) {
  return guarded([&] {
    if (!ckpt) throw config_error("mt_lesion: checkpoint is null");
    const auto sizes = parse_int_csv(sizes_csv);
    if (sizes.empty()) throw config_error("mt_lesion: no sizes given");
    auto result = workflow_lesion(ckpt->dir, sizes, data_path ? data_path : "");
    if (json_out) *json_out = dup_string(result.dump(2));
  });
}

int mt_extend(mt_checkpoint* ckpt, int add, long long finetune_steps, const char* out_dir,
              char** json_out) {
  return guarded([&] {
    if (!ckpt) throw config_error("mt_extend: checkpoint is null");
    auto result = workflow_extend(ckpt->dir, add, finetune_steps, out_dir ? out_dir : "");
    if (json_out) *json_out = dup_string(result.dump(2));
  });
}

int mt_bench(const char* variants_csv, const char* lengths_csv, int mem, int trials,
             char** json_out) {
  return guarded([&] {
    const auto lengths = parse_int_csv(lengths_csv);
    if (lengths.size() < 2) throw config_error("mt_bench: need at least two lengths");
    auto result = workflow_bench(parse_str_csv(variants_csv), lengths, mem, trials);
    if (json_out) *json_out = dup_string(result.dump(2));
  });
}

int mt_dump_attention(mt_checkpoint* ckpt, const char* input_line, const char* out_dir,
                      char** json_out) {
  return guarded([&] {
    if (!ckpt) throw config_error("mt_dump_attention: checkpoint is null");
    if (!input_line || !out_dir)
      throw config_error("mt_dump_attention: input line and out_dir are required");
    auto result = workflow_dump_attn(ckpt->dir, input_line, out_dir);
    if (json_out) *json_out = dup_string(result.dump(2));
  });
}

int mt_analyze(const char* dump_dir, const char* out_dir, char** json_out) {
  return guarded([&] {
    if (!dump_dir) throw config_error("mt_analyze: dump_dir is null");
    auto result = workflow_analyze(dump_dir, out_dir ? out_dir : "");
    if (json_out) *json_out = dup_string(result.dump(2));
  });
}

int mt_translate(mt_checkpoint* ckpt, const char* input_line, int max_out, char** text_out) {
  return guarded([&] {
    if (!ckpt) throw config_error("mt_translate: checkpoint is null");
    if (!input_line) throw config_error("mt_translate: input line is null");
    const std::string text = workflow_translate(ckpt->dir, input_line, max_out);
    if (text_out) *text_out = dup_string(text);
  });
}

}  // extern "C"
