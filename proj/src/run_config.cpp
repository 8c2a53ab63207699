#include "memt/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "memt/data.hpp"

namespace memt {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const int r = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': expected integer, got '" + v + "'");
  }
}

int64_t to_i64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const int64_t r = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': expected integer, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const uint64_t r = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': expected unsigned integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw config_error("config key '" + key + "': expected number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error("config key '" + key + "': expected true/false, got '" + v + "'");
}

}  // namespace

void RunConfig::validate_for_train() const {
  if (out_dir.empty()) throw config_error("config key 'out_dir' is required");
  if (!task.empty() && !corpus_path.empty())
    throw config_error("set either 'task' or 'corpus_path', not both");
  if (task.empty() && corpus_path.empty())
    throw config_error("one of 'task' or 'corpus_path' is required");
  if (vocab_mode != "word" && vocab_mode != "char")
    throw config_error("config key 'vocab_mode': expected word|char");
  if (bottleneck_kv != "pre" && bottleneck_kv != "post")
    throw config_error("config key 'bottleneck_kv': expected pre|post");
  variant_from_name(variant);
  if (!task.empty()) task_from_name(task);
}

std::map<std::string, std::string> RunConfig::as_map() const {
  std::map<std::string, std::string> kv;
  kv["variant"] = variant;
  kv["n_layers_enc"] = std::to_string(n_layers_enc);
  kv["n_layers_dec"] = std::to_string(n_layers_dec);
  kv["d_model"] = std::to_string(d_model);
  kv["d_ff"] = std::to_string(d_ff);
  kv["heads"] = std::to_string(heads);
  {
    std::ostringstream os;
    os << p_drop;
    kv["p_drop"] = os.str();
  }
  kv["m_enc"] = std::to_string(m_enc);
  kv["m_dec"] = std::to_string(m_dec);
  kv["pe_on_memory"] = pe_on_memory ? "true" : "false";
  kv["bottleneck_kv"] = bottleneck_kv;
  if (!task.empty()) kv["task"] = task;
  if (!corpus_path.empty()) kv["corpus_path"] = corpus_path;
  kv["vocab_mode"] = vocab_mode;
  kv["len_min"] = std::to_string(len_min);
  kv["len_max"] = std::to_string(len_max);
  kv["vocab_size"] = std::to_string(vocab_size);
  kv["batch_size"] = std::to_string(batch_size);
  kv["steps"] = std::to_string(steps);
  kv["warmup_steps"] = std::to_string(warmup_steps);
  kv["seed"] = std::to_string(seed);
  kv["out_dir"] = out_dir;
  return kv;
}

ModelConfig RunConfig::model_config(int vocab_src, int vocab_tgt, int max_len) const {
  ModelConfig mc;
  mc.variant = variant_from_name(variant);
  mc.n_layers_enc = n_layers_enc;
  mc.n_layers_dec = n_layers_dec;
  mc.d_model = d_model;
  mc.d_ff = d_ff;
  mc.h = heads;
  mc.p_drop = p_drop;
  mc.m_enc = m_enc;
  mc.m_dec = m_dec;
  mc.vocab_src = vocab_src;
  mc.vocab_tgt = vocab_tgt;
  mc.max_len = max_len;
  mc.pe_on_memory = pe_on_memory;
  mc.bottleneck_kv = bottleneck_kv == "pre" ? BottleneckKv::pre : BottleneckKv::post;
  mc.seed = seed;
  mc.validate();
  return mc;
}

RunConfig run_config_from_map(const std::map<std::string, std::string>& kv) {
  RunConfig rc;
  bool task_given = false, corpus_given = false;
  for (const auto& [key, value] : kv) {
    if (key == "variant") rc.variant = value;
    else if (key == "n_layers_enc") rc.n_layers_enc = to_int(key, value);
    else if (key == "n_layers_dec") rc.n_layers_dec = to_int(key, value);
    else if (key == "d_model") rc.d_model = to_int(key, value);
    else if (key == "d_ff") rc.d_ff = to_int(key, value);
    else if (key == "heads") rc.heads = to_int(key, value);
    else if (key == "p_drop") rc.p_drop = to_double(key, value);
    else if (key == "m_enc") rc.m_enc = to_int(key, value);
    else if (key == "m_dec") rc.m_dec = to_int(key, value);
    else if (key == "pe_on_memory") rc.pe_on_memory = to_bool(key, value);
    else if (key == "bottleneck_kv") rc.bottleneck_kv = value;
    else if (key == "task") { rc.task = value; task_given = true; }
    else if (key == "corpus_path") { rc.corpus_path = value; corpus_given = true; }
    else if (key == "vocab_mode") rc.vocab_mode = value;
    else if (key == "len_min") rc.len_min = to_int(key, value);
    else if (key == "len_max") rc.len_max = to_int(key, value);
    else if (key == "vocab_size") rc.vocab_size = to_int(key, value);
    else if (key == "batch_size") rc.batch_size = to_int(key, value);
    else if (key == "steps") rc.steps = to_i64(key, value);
    else if (key == "warmup_steps") rc.warmup_steps = to_int(key, value);
    else if (key == "seed") rc.seed = to_u64(key, value);
    else if (key == "out_dir") rc.out_dir = value;
    else throw config_error("unknown config key '" + key + "'");
  }
  if (corpus_given && !task_given) rc.task.clear();
  return rc;
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (kv.count(key))
      throw config_error("config line " + std::to_string(line_no) + ": duplicate key '" + key +
                         "'");
    kv[key] = value;
  }
  return run_config_from_map(kv);
}

}  // namespace memt
