#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "memt/rng.hpp"
#include "memt/tokens.hpp"

namespace memt {

// id 0..3 are PAD/BOS/EOS/UNK; [mem] ids (if any) occupy the top of the range.
struct Vocab {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;
  int mem_reserve = 0;

  int size() const { return static_cast<int>(id_to_token.size()); }
  int payload_begin() const { return kReservedIds; }
  int payload_end() const { return size() - mem_reserve; }
  int mem_id(int k) const { return size() - mem_reserve + k; }
  bool is_mem(int id) const { return mem_reserve > 0 && id >= size() - mem_reserve; }

  int id_of(const std::string& token) const;
  const std::string& token_of(int id) const;

  // Payload tokens named by their own id ("4", "5", ...), for synthetic tasks.
  static Vocab synthetic(int vocab_size, int mem_reserve);
  // Reserved ids + the given payload tokens in order, then mem ids.
  static Vocab from_tokens(const std::vector<std::string>& payload_tokens, int mem_reserve);

  // Same payload, different number of [mem] ids at the top.
  Vocab with_mem_reserve(int m) const;
};

using Pair = std::pair<std::vector<int>, std::vector<int>>;

enum class TaskKind { copy, reverse, sort };
TaskKind task_from_name(const std::string& s);
const char* task_name(TaskKind k);

// Uniform random payload sequences with the task's transform applied;
// deterministic per seed.
std::vector<Pair> gen_task(TaskKind kind, int len_min, int len_max, const Vocab& vocab,
                           int count, uint64_t seed);

enum class VocabMode { word, chars };

struct Corpus {
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> pairs;
  Vocab vocab_src, vocab_tgt;
};

// One pair per line, single tab separator. Tokens are whitespace words or
// UTF-8 code points; vocab is frequency-ordered with first-seen tie-break.
Corpus load_tsv_corpus(const std::string& path, int max_pairs, VocabMode mode);

std::vector<std::string> tokenize(const std::string& text, VocabMode mode);
std::string detokenize(const std::vector<std::string>& tokens, VocabMode mode);

std::vector<int> ids_of(const std::vector<std::string>& tokens, const Vocab& vocab);

struct Batch {
  // Padded id matrices; every row of a field has the batch-wide width.
  std::vector<std::vector<int>> src, tgt_in, tgt_out;
  std::vector<std::vector<bool>> src_pad_flags, tgt_pad_flags;
  int64_t src_tokens = 0;  // true token count before padding
  int64_t tgt_tokens = 0;
};

// tgt_in = [mem ids] + BOS + tokens, tgt_out the left shift ending in EOS,
// both PAD-tailed to the per-batch max width. Shuffle order is seeded.
std::vector<Batch> batchify(const std::vector<Pair>& pairs, int batch_size, const Vocab& vocab_tgt,
                            uint64_t seed, bool shuffle);

// Writes pairs in the TSV corpus format (payload tokens, space-separated).
void write_tsv(const std::string& path, const std::vector<Pair>& pairs, const Vocab& vocab_src,
               const Vocab& vocab_tgt);

}  // namespace memt
