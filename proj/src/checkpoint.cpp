#include "memt/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace memt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr uint64_t kOptimMagic = 0x314d49544f54'4dULL;  // "MTOPTIM1" truncated tag

json vocab_json(const Vocab& v) {
  return json{{"tokens", v.id_to_token}, {"mem_reserve", v.mem_reserve}};
}

Vocab vocab_from_json(const json& j) {
  Vocab v;
  v.id_to_token = j.at("tokens").get<std::vector<std::string>>();
  v.mem_reserve = j.at("mem_reserve").get<int>();
  for (size_t i = 0; i < v.id_to_token.size(); ++i)
    v.token_to_id[v.id_to_token[i]] = static_cast<int>(i);
  return v;
}

json model_config_json(const ModelConfig& c) {
  return json{{"variant", variant_name(c.variant)},
              {"n_layers_enc", c.n_layers_enc},
              {"n_layers_dec", c.n_layers_dec},
              {"d_model", c.d_model},
              {"d_ff", c.d_ff},
              {"heads", c.h},
              {"p_drop", c.p_drop},
              {"m_enc", c.m_enc},
              {"m_dec", c.m_dec},
              {"vocab_src", c.vocab_src},
              {"vocab_tgt", c.vocab_tgt},
              {"max_len", c.max_len},
              {"pe_on_memory", c.pe_on_memory},
              {"bottleneck_kv", c.bottleneck_kv == BottleneckKv::post ? "post" : "pre"},
              {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.variant = variant_from_name(j.at("variant").get<std::string>());
  c.n_layers_enc = j.at("n_layers_enc").get<int>();
  c.n_layers_dec = j.at("n_layers_dec").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.h = j.at("heads").get<int>();
  c.p_drop = j.at("p_drop").get<double>();
  c.m_enc = j.at("m_enc").get<int>();
  c.m_dec = j.at("m_dec").get<int>();
  c.vocab_src = j.at("vocab_src").get<int>();
  c.vocab_tgt = j.at("vocab_tgt").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.pe_on_memory = j.at("pe_on_memory").get<bool>();
  c.bottleneck_kv = j.at("bottleneck_kv").get<std::string>() == "pre" ? BottleneckKv::pre
                                                                      : BottleneckKv::post;
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

template <typename T>
void write_raw(std::ofstream& out, const T* ptr, size_t count) {
  out.write(reinterpret_cast<const char*>(ptr), static_cast<std::streamsize>(count * sizeof(T)));
}

template <typename T>
void read_raw(std::ifstream& in, T* ptr, size_t count) {
  in.read(reinterpret_cast<char*>(ptr), static_cast<std::streamsize>(count * sizeof(T)));
  if (!in) throw parse_error("checkpoint: truncated binary file");
}

}  // namespace

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::string model_config_hash(const ModelConfig& cfg,
                              const std::map<std::string, std::string>& run_config) {
  json j = model_config_json(cfg);
  j["run"] = run_config;
  return hash_hex(fnv1a64(j.dump()));
}

void save_checkpoint(const std::string& dir, const Model& model, const Vocab& vocab_src,
                     const Vocab& vocab_tgt, const std::map<std::string, std::string>& run_config,
                     int64_t step, const Adam* optim) {
  fs::create_directories(dir);

  json manifest;
  manifest["format"] = "memt-checkpoint-v1";
  manifest["config"] = model_config_json(model.config());
  manifest["run"] = run_config;
  manifest["config_hash"] = model_config_hash(model.config(), run_config);
  manifest["step"] = step;
  manifest["vocab_src"] = vocab_json(vocab_src);
  manifest["vocab_tgt"] = vocab_json(vocab_tgt);

  json index = json::array();
  int64_t offset = 0;
  for (const auto& p : model.params()) {
    index.push_back({{"name", p.name},
                     {"dtype", "f32"},
                     {"shape", p.tensor.shape},
                     {"offset", offset}});
    offset += p.tensor.numel() * 4;
  }
  manifest["params"] = index;

  {
    std::ofstream mf(dir + "/manifest.json");
    if (!mf) throw parse_error("cannot write " + dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
  }
  {
    std::ofstream pf(dir + "/params.bin", std::ios::binary);
    for (const auto& p : model.params()) {
      std::vector<float> f(p.tensor.data->begin(), p.tensor.data->end());
      write_raw(pf, f.data(), f.size());
    }
  }
  {
    std::ofstream of(dir + "/optim.bin", std::ios::binary);
    write_raw(of, &kOptimMagic, 1);
    write_raw(of, &step, 1);
    const int64_t t = optim ? optim->t() : 0;
    write_raw(of, &t, 1);
    Rng replay(Rng::derive(model.config().seed, static_cast<uint64_t>(step)));
    const auto state = replay.state();
    write_raw(of, state.data(), state.size());
    for (size_t pi = 0; pi < model.params().size(); ++pi) {
      const auto& data = *model.params()[pi].tensor.data;
      write_raw(of, data.data(), data.size());
      if (optim) {
        const auto& m = optim->m()[pi];
        const auto& v = optim->v()[pi];
        write_raw(of, m.data(), m.size());
        write_raw(of, v.data(), v.size());
      } else {
        std::vector<double> zeros(data.size(), 0.0);
        write_raw(of, zeros.data(), zeros.size());
        write_raw(of, zeros.data(), zeros.size());
      }
    }
  }
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw parse_error("cannot open " + dir + "/manifest.json");
  json manifest = json::parse(mf, nullptr, true);
  if (manifest.value("format", "") != "memt-checkpoint-v1")
    throw parse_error("unrecognized checkpoint format in " + dir);

  const ModelConfig cfg = model_config_from_json(manifest.at("config"));
  LoadedCheckpoint lc{Model(cfg)};
  lc.vocab_src = vocab_from_json(manifest.at("vocab_src"));
  lc.vocab_tgt = vocab_from_json(manifest.at("vocab_tgt"));
  lc.run_config = manifest.value("run", std::map<std::string, std::string>{});
  lc.step = manifest.at("step").get<int64_t>();
  lc.config_hash = manifest.at("config_hash").get<std::string>();

  const json& index = manifest.at("params");
  if (index.size() != lc.model.params().size())
    throw parse_error("checkpoint parameter count does not match architecture");
  for (size_t i = 0; i < index.size(); ++i) {
    const auto& entry = index[i];
    Parameter& p = lc.model.params()[i];
    if (entry.at("name").get<std::string>() != p.name)
      throw parse_error("checkpoint parameter order mismatch at " + p.name);
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    if (shape != p.tensor.shape)
      throw parse_error("checkpoint shape mismatch for " + p.name);
  }

  {
    std::ifstream pf(dir + "/params.bin", std::ios::binary);
    if (!pf) throw parse_error("cannot open " + dir + "/params.bin");
    for (auto& p : lc.model.params()) {
      std::vector<float> f(static_cast<size_t>(p.tensor.numel()));
      read_raw(pf, f.data(), f.size());
      for (size_t i = 0; i < f.size(); ++i)
        (*p.tensor.data)[i] = static_cast<double>(f[i]);
    }
  }

  std::ifstream of(dir + "/optim.bin", std::ios::binary);
  if (of) {
    uint64_t magic = 0;
    read_raw(of, &magic, 1);
    if (magic != kOptimMagic) throw parse_error("optim.bin: bad magic in " + dir);
    int64_t step = 0;
    read_raw(of, &step, 1);
    read_raw(of, &lc.adam_t, 1);
    std::array<uint64_t, 4> rng_state{};
    read_raw(of, rng_state.data(), rng_state.size());
    for (auto& p : lc.model.params()) {
      const size_t n = static_cast<size_t>(p.tensor.numel());
      read_raw(of, p.tensor.data->data(), n);  // f64 masters win over f32
      lc.adam_m.emplace_back(n);
      lc.adam_v.emplace_back(n);
      read_raw(of, lc.adam_m.back().data(), n);
      read_raw(of, lc.adam_v.back().data(), n);
    }
    lc.has_optim = true;
  }
  return lc;
}

}  // namespace memt
