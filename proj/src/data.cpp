#include "memt/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "memt/tensor.hpp"

namespace memt {

namespace {

void add_reserved(Vocab& v) {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) {
    v.token_to_id[t] = static_cast<int>(v.id_to_token.size());
    v.id_to_token.emplace_back(t);
  }
}

void add_mem_tokens(Vocab& v, int mem_reserve) {
  v.mem_reserve = mem_reserve;
  for (int k = 0; k < mem_reserve; ++k) {
    const std::string t = "[mem]" + std::to_string(k);
    v.token_to_id[t] = static_cast<int>(v.id_to_token.size());
    v.id_to_token.push_back(t);
  }
}

}  // namespace

int Vocab::id_of(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnkId : it->second;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || id >= size())
    throw index_error("vocab: id " + std::to_string(id) + " outside [0," +
                      std::to_string(size()) + ")");
  return id_to_token[static_cast<size_t>(id)];
}

Vocab Vocab::synthetic(int vocab_size, int mem_reserve) {
  if (vocab_size <= kReservedIds + mem_reserve)
    throw config_error("vocab_size " + std::to_string(vocab_size) +
                       " leaves no payload tokens");
  Vocab v;
  add_reserved(v);
  for (int id = kReservedIds; id < vocab_size - mem_reserve; ++id) {
    v.token_to_id[std::to_string(id)] = id;
    v.id_to_token.push_back(std::to_string(id));
  }
  add_mem_tokens(v, mem_reserve);
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& payload_tokens, int mem_reserve) {
  Vocab v;
  add_reserved(v);
  for (const auto& t : payload_tokens) {
    if (v.token_to_id.count(t)) continue;
    v.token_to_id[t] = static_cast<int>(v.id_to_token.size());
    v.id_to_token.push_back(t);
  }
  add_mem_tokens(v, mem_reserve);
  return v;
}

Vocab Vocab::with_mem_reserve(int m) const {
  std::vector<std::string> payload(id_to_token.begin() + kReservedIds,
                                   id_to_token.end() - mem_reserve);
  return from_tokens(payload, m);
}

TaskKind task_from_name(const std::string& s) {
  if (s == "copy") return TaskKind::copy;
  if (s == "reverse") return TaskKind::reverse;
  if (s == "sort") return TaskKind::sort;
  throw config_error("unknown task '" + s + "'");
}

const char* task_name(TaskKind k) {
  switch (k) {
    case TaskKind::copy: return "copy";
    case TaskKind::reverse: return "reverse";
    case TaskKind::sort: return "sort";
  }
  return "?";
}

std::vector<Pair> gen_task(TaskKind kind, int len_min, int len_max, const Vocab& vocab,
                           int count, uint64_t seed) {
  if (len_min < 1 || len_max < len_min) throw config_error("gen_task: bad length range");
  const int lo = vocab.payload_begin(), hi = vocab.payload_end();
  if (hi <= lo) throw config_error("gen_task: vocab has no payload range");
  Rng rng(seed);
  std::vector<Pair> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int len = static_cast<int>(rng.range(len_min, len_max + 1));
    std::vector<int> src(static_cast<size_t>(len));
    for (auto& t : src) t = static_cast<int>(rng.range(lo, hi));
    std::vector<int> tgt = src;
    if (kind == TaskKind::reverse) std::reverse(tgt.begin(), tgt.end());
    if (kind == TaskKind::sort) std::sort(tgt.begin(), tgt.end());
    out.emplace_back(std::move(src), std::move(tgt));
  }
  return out;
}

std::vector<std::string> tokenize(const std::string& text, VocabMode mode) {
  std::vector<std::string> out;
  if (mode == VocabMode::word) {
    std::istringstream is(text);
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
  }
  // UTF-8 code points, so multi-byte characters survive the round trip.
  size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    size_t len = 1;
    if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    len = std::min(len, text.size() - i);
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens, VocabMode mode) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (mode == VocabMode::word && i > 0) out += ' ';
    out += tokens[i];
  }
  return out;
}

Corpus load_tsv_corpus(const std::string& path, int max_pairs, VocabMode mode) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open corpus file " + path);
  Corpus corpus;
  // token -> (count, first-seen index); ordering decided after the scan.
  std::unordered_map<std::string, std::pair<int64_t, int64_t>> freq_src, freq_tgt;
  auto note = [](std::unordered_map<std::string, std::pair<int64_t, int64_t>>& freq,
                 const std::vector<std::string>& toks) {
    for (const auto& t : toks) {
      auto it = freq.find(t);
      if (it == freq.end())
        freq[t] = {1, static_cast<int64_t>(freq.size())};
      else
        it->second.first++;
    }
  };
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (max_pairs > 0 && static_cast<int>(corpus.pairs.size()) >= max_pairs) break;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw parse_error("line " + std::to_string(line_no) + ": expected exactly one tab");
    }
    auto src_toks = tokenize(line.substr(0, tab), mode);
    auto tgt_toks = tokenize(line.substr(tab + 1), mode);
    note(freq_src, src_toks);
    note(freq_tgt, tgt_toks);
    corpus.pairs.emplace_back(std::move(src_toks), std::move(tgt_toks));
  }
  auto build = [](const std::unordered_map<std::string, std::pair<int64_t, int64_t>>& freq) {
    std::vector<std::pair<std::string, std::pair<int64_t, int64_t>>> items(freq.begin(),
                                                                           freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second.first != b.second.first) return a.second.first > b.second.first;
      return a.second.second < b.second.second;  // first-seen breaks ties
    });
    std::vector<std::string> payload;
    payload.reserve(items.size());
    for (auto& it : items) payload.push_back(it.first);
    return Vocab::from_tokens(payload, 0);
  };
  corpus.vocab_src = build(freq_src);
  corpus.vocab_tgt = build(freq_tgt);
  return corpus;
}

std::vector<int> ids_of(const std::vector<std::string>& tokens, const Vocab& vocab) {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab.id_of(t));
  return out;
}

std::vector<Batch> batchify(const std::vector<Pair>& pairs, int batch_size, const Vocab& vocab_tgt,
                            uint64_t seed, bool shuffle) {
  if (batch_size < 1) throw config_error("batchify: batch_size must be >= 1");
  std::vector<size_t> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle) {
    Rng rng(seed);
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.bounded(i)]);
  }
  const int m_dec = vocab_tgt.mem_reserve;
  std::vector<Batch> batches;
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
    Batch b;
    size_t src_w = 0, tgt_w = 0;
    for (size_t i = start; i < end; ++i) {
      const Pair& p = pairs[order[i]];
      src_w = std::max(src_w, p.first.size());
      tgt_w = std::max(tgt_w, p.second.size() + static_cast<size_t>(m_dec) + 1);
    }
    for (size_t i = start; i < end; ++i) {
      const Pair& p = pairs[order[i]];
      std::vector<int> src = p.first;
      b.src_tokens += static_cast<int64_t>(src.size());
      std::vector<bool> spad(src_w, false);
      for (size_t j = src.size(); j < src_w; ++j) spad[j] = true;
      src.resize(src_w, kPadId);

      std::vector<int> tin;
      for (int k = 0; k < m_dec; ++k) tin.push_back(vocab_tgt.mem_id(k));
      tin.push_back(kBosId);
      tin.insert(tin.end(), p.second.begin(), p.second.end());
      std::vector<int> tout(tin.begin() + 1, tin.end());
      tout.push_back(kEosId);
      b.tgt_tokens += static_cast<int64_t>(tout.size());
      std::vector<bool> tpad(tgt_w, false);
      for (size_t j = tin.size(); j < tgt_w; ++j) tpad[j] = true;
      tin.resize(tgt_w, kPadId);
      tout.resize(tgt_w, kPadId);

      b.src.push_back(std::move(src));
      b.src_pad_flags.push_back(std::move(spad));
      b.tgt_in.push_back(std::move(tin));
      b.tgt_out.push_back(std::move(tout));
      b.tgt_pad_flags.push_back(std::move(tpad));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

void write_tsv(const std::string& path, const std::vector<Pair>& pairs, const Vocab& vocab_src,
               const Vocab& vocab_tgt) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot write " + path);
  for (const auto& [src, tgt] : pairs) {
    for (size_t i = 0; i < src.size(); ++i)
      out << (i ? " " : "") << vocab_src.token_of(src[i]);
    out << '\t';
    for (size_t i = 0; i < tgt.size(); ++i)
      out << (i ? " " : "") << vocab_tgt.token_of(tgt[i]);
    out << '\n';
  }
}

}  // namespace memt
