#include "memt/workflow.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "memt/analysis.hpp"
#include "memt/experiments.hpp"

namespace memt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr uint64_t kHeldoutStream = 0xe7a1;
constexpr int kHeldoutSize = 500;
constexpr int64_t kEvalEvery = 200;

VocabMode vocab_mode_of(const std::string& s) {
  return s == "char" ? VocabMode::chars : VocabMode::word;
}

std::vector<Pair> corpus_ids(const Corpus& corpus, const Vocab& vs, const Vocab& vt) {
  std::vector<Pair> out;
  out.reserve(corpus.pairs.size());
  for (const auto& [s, t] : corpus.pairs) out.emplace_back(ids_of(s, vs), ids_of(t, vt));
  return out;
}

json metrics_json(const EvalMetrics& m) {
  return json{{"token_accuracy", m.token_accuracy},
              {"sequence_accuracy", m.sequence_accuracy},
              {"bleu4", m.bleu4},
              {"pairs", m.pairs}};
}

RunConfig run_config_of(const LoadedCheckpoint& lc) {
  return run_config_from_map(lc.run_config);
}

std::vector<Pair> default_eval_pairs(const std::string& ckpt_dir, const LoadedCheckpoint& lc) {
  const std::string heldout_tsv = ckpt_dir + "/heldout.tsv";
  const RunConfig rc = run_config_of(lc);
  if (fs::exists(heldout_tsv))
    return load_eval_pairs(heldout_tsv, lc.vocab_src, lc.vocab_tgt, rc.vocab_mode);
  if (!rc.task.empty()) {
    return gen_task(task_from_name(rc.task), rc.len_min, rc.len_max, lc.vocab_tgt, kHeldoutSize,
                    Rng::derive(rc.seed, kHeldoutStream));
  }
  throw config_error("no evaluation data: pass --data or keep heldout.tsv with the checkpoint");
}

}  // namespace

uint64_t lesion_seed_for(const ModelConfig& cfg) { return Rng::derive(cfg.seed, 0x1e51); }

std::vector<Pair> load_eval_pairs(const std::string& path, const Vocab& vocab_src,
                                  const Vocab& vocab_tgt, const std::string& vocab_mode) {
  const VocabMode mode = vocab_mode_of(vocab_mode);
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open data file " + path);
  std::vector<Pair> out;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw parse_error("line " + std::to_string(line_no) + ": expected exactly one tab");
    out.emplace_back(ids_of(tokenize(line.substr(0, tab), mode), vocab_src),
                     ids_of(tokenize(line.substr(tab + 1), mode), vocab_tgt));
  }
  return out;
}

DataSource data_source_for(const RunConfig& rc, const Vocab& vocab_src, const Vocab& vocab_tgt) {
  DataSource ds;
  ds.vocab_src = vocab_src;
  ds.vocab_tgt = vocab_tgt;
  ds.seed = rc.seed;
  if (!rc.task.empty()) {
    ds.synthetic = true;
    ds.kind = task_from_name(rc.task);
    ds.len_min = rc.len_min;
    ds.len_max = rc.len_max;
    ds.heldout = gen_task(ds.kind, rc.len_min, rc.len_max, vocab_tgt, kHeldoutSize,
                          Rng::derive(rc.seed, kHeldoutStream));
  } else {
    ds.synthetic = false;
    Corpus corpus = load_tsv_corpus(rc.corpus_path, 0, vocab_mode_of(rc.vocab_mode));
    auto pairs = corpus_ids(corpus, vocab_src, vocab_tgt);
    const size_t held = std::min<size_t>(kHeldoutSize, pairs.size() / 10);
    ds.heldout.assign(pairs.end() - static_cast<int64_t>(held), pairs.end());
    pairs.resize(pairs.size() - held);
    ds.train_pairs = std::move(pairs);
  }
  return ds;
}

json workflow_train(const RunConfig& rc_in) {
  RunConfig rc = rc_in;
  rc.validate_for_train();

  Vocab vocab_src, vocab_tgt;
  int max_seq_len = rc.len_max;
  if (!rc.task.empty()) {
    vocab_src = Vocab::synthetic(rc.vocab_size, 0);
    vocab_tgt = Vocab::synthetic(rc.vocab_size, rc.m_dec);
  } else {
    Corpus corpus = load_tsv_corpus(rc.corpus_path, 0, vocab_mode_of(rc.vocab_mode));
    vocab_src = corpus.vocab_src;
    vocab_tgt = corpus.vocab_tgt.with_mem_reserve(rc.m_dec);
    for (const auto& [s, t] : corpus.pairs)
      max_seq_len = std::max<int>(max_seq_len,
                                  static_cast<int>(std::max(s.size(), t.size())));
  }
  const int max_len = 2 * max_seq_len + rc.m_enc + rc.m_dec + 16;
  ModelConfig mc = rc.model_config(vocab_src.size(), vocab_tgt.size(), max_len);
  Model model(mc);
  DataSource data = data_source_for(rc, vocab_src, vocab_tgt);

  fs::create_directories(rc.out_dir);
  write_tsv(rc.out_dir + "/heldout.tsv", data.heldout, vocab_src, vocab_tgt);
  std::ofstream metrics(rc.out_dir + "/metrics.jsonl");

  TrainConfig tc;
  tc.steps = rc.steps;
  tc.batch_size = rc.batch_size;
  tc.warmup_steps = rc.warmup_steps;
  tc.eval_every = kEvalEvery;
  tc.seed = rc.seed;

  Adam optim(model.params(), tc.beta1, tc.beta2, tc.adam_eps);
  const auto run_map = rc.as_map();
  SaveHook save = [&](int64_t step) {
    save_checkpoint(rc.out_dir, model, vocab_src, vocab_tgt, run_map, step, &optim);
  };
  TrainResult tr = train(model, data, tc, optim, &metrics, save, 0);
  if (tr.diverged) throw error("training diverged (non-finite loss) at step " +
                               std::to_string(tr.steps_done + 1) +
                               "; last checkpoint retained");

  EvalMetrics final_eval = evaluate(model, data.heldout);
  json out = {{"out_dir", rc.out_dir},
              {"steps", tr.steps_done},
              {"final_loss", tr.final_loss},
              {"eval", metrics_json(final_eval)},
              {"config_hash", model_config_hash(mc, run_map)}};
  std::ofstream(rc.out_dir + "/result.json") << out.dump(2) << "\n";
  return out;
}

json workflow_train_file(const std::string& config_path) {
  return workflow_train(parse_run_config(config_path));
}

json workflow_eval(const std::string& ckpt_dir, const std::string& data_path, int mem_size) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_dir);
  const RunConfig rc = run_config_of(lc);
  std::vector<Pair> pairs =
      data_path.empty() ? default_eval_pairs(ckpt_dir, lc)
                        : load_eval_pairs(data_path, lc.vocab_src, lc.vocab_tgt, rc.vocab_mode);
  json out;
  out["checkpoint"] = ckpt_dir;
  out["config_hash"] = lc.config_hash;
  if (mem_size >= 0 && mem_size != lc.model.config().m_enc) {
    Model lesioned = lesion_memory(lc.model, mem_size, lesion_seed_for(lc.model.config()));
    out["mem_size"] = mem_size;
    out["metrics"] = metrics_json(evaluate(lesioned, pairs));
  } else {
    out["mem_size"] = lc.model.config().m_enc;
    out["metrics"] = metrics_json(evaluate(lc.model, pairs));
  }
  return out;
}

json workflow_lesion(const std::string& ckpt_dir, const std::vector<int>& sizes,
                     const std::string& data_path) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_dir);
  const RunConfig rc = run_config_of(lc);
  std::vector<Pair> pairs =
      data_path.empty() ? default_eval_pairs(ckpt_dir, lc)
                        : load_eval_pairs(data_path, lc.vocab_src, lc.vocab_tgt, rc.vocab_mode);
  ExperimentReport rep = lesion_grid(lc.model, sizes, pairs, ckpt_dir, lc.config_hash,
                                     lesion_seed_for(lc.model.config()));
  json out = rep.to_json();
  out["table"] = rep.to_table();
  return out;
}

json workflow_extend(const std::string& ckpt_dir, int add, int64_t finetune_steps,
                     const std::string& out_dir) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_dir);
  const RunConfig rc = run_config_of(lc);
  DataSource data = data_source_for(rc, lc.vocab_src, lc.vocab_tgt);
  if (fs::exists(ckpt_dir + "/heldout.tsv"))
    data.heldout = load_eval_pairs(ckpt_dir + "/heldout.tsv", lc.vocab_src, lc.vocab_tgt,
                                   rc.vocab_mode);

  TrainConfig tc;
  tc.steps = finetune_steps;
  tc.batch_size = rc.batch_size;
  tc.warmup_steps = rc.warmup_steps;
  tc.eval_every = kEvalEvery;
  tc.seed = Rng::derive(rc.seed, 0xf17e);

  ExtensionResult res = extend_memory(lc.model, add, finetune_steps,
                                      lesion_seed_for(lc.model.config()), data, tc, ckpt_dir,
                                      lc.config_hash);
  if (!out_dir.empty()) {
    RunConfig extended_rc = rc;
    extended_rc.m_enc = res.model.config().m_enc;
    extended_rc.out_dir = out_dir;
    save_checkpoint(out_dir, res.model, lc.vocab_src, lc.vocab_tgt, extended_rc.as_map(),
                    lc.step + finetune_steps, nullptr);
    write_tsv(out_dir + "/heldout.tsv", data.heldout, lc.vocab_src, lc.vocab_tgt);
  }
  json out = res.report.to_json();
  out["table"] = res.report.to_table();
  if (!out_dir.empty()) out["out_dir"] = out_dir;
  return out;
}

json workflow_bench(const std::vector<std::string>& variant_names,
                    const std::vector<int>& lengths, int m, int trials) {
  std::vector<Variant> variants;
  for (const auto& v : variant_names) variants.push_back(variant_from_name(v));
  if (variants.empty())
    variants = {Variant::baseline, Variant::mem, Variant::mem_bottleneck};
  ExperimentReport rep = complexity_bench(variants, lengths, m, trials, BenchDims{});
  json out = rep.to_json();
  out["table"] = rep.to_table();
  return out;
}

json workflow_dump_attn(const std::string& ckpt_dir, const std::string& input_line,
                        const std::string& out_dir) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_dir);
  const RunConfig rc = run_config_of(lc);
  const ModelConfig& cfg = lc.model.config();
  const VocabMode mode = vocab_mode_of(rc.vocab_mode);

  auto src_tokens = tokenize(input_line, mode);
  if (src_tokens.empty()) throw contract_error("dump-attn: empty input line");
  const auto src = ids_of(src_tokens, lc.vocab_src);

  // Greedy decode first, then one teacher-forced captured pass over the
  // decoded target so decoder maps cover a full output.
  const auto decoded = lc.model.greedy_decode(src, static_cast<int>(src.size()) * 2 + 10);
  std::vector<int> tgt_in;
  for (int k = 0; k < cfg.m_dec; ++k) tgt_in.push_back(cfg.dec_mem_id(k));
  tgt_in.push_back(kBosId);
  tgt_in.insert(tgt_in.end(), decoded.begin(), decoded.end());

  NoGradGuard no_grad;
  std::vector<AttentionCapture> captures;
  ForwardCtx ctx;
  ctx.capture = true;
  ctx.sink = &captures;
  EncodeResult enc = lc.model.encode(src, ctx);
  lc.model.decode(tgt_in, enc.h, ctx);

  std::vector<std::string> src_labels;
  for (int id : src) src_labels.push_back(lc.vocab_src.token_of(id));
  std::vector<std::string> tgt_labels;
  for (int id : tgt_in) tgt_labels.push_back(lc.vocab_tgt.token_of(id));

  AttentionDump dump = make_dump(captures, src_labels, tgt_labels, cfg.m_enc, cfg.m_dec);
  write_attention_dump(out_dir, dump);
  return json{{"out_dir", out_dir},
              {"records", dump.records.size()},
              {"decoded", detokenize(tgt_labels, mode)},
              {"config_hash", lc.config_hash}};
}

json workflow_analyze(const std::string& dump_dir, const std::string& out_dir) {
  AttentionDump dump = read_attention_dump(dump_dir);
  json report = analyze_records(dump.records, ClassifyThresholds{}, out_dir);
  report["dump"] = dump_dir;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream(out_dir + "/analysis.json") << report.dump(2) << "\n";
  }
  return report;
}

std::string workflow_translate(const std::string& ckpt_dir, const std::string& input_line,
                               int max_out) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_dir);
  const RunConfig rc = run_config_of(lc);
  const VocabMode mode = vocab_mode_of(rc.vocab_mode);
  const auto src = ids_of(tokenize(input_line, mode), lc.vocab_src);
  if (src.empty()) throw contract_error("translate: empty input line");
  const auto out_ids =
      lc.model.greedy_decode(src, max_out > 0 ? max_out : static_cast<int>(src.size()) * 2 + 10);
  std::vector<std::string> toks;
  for (int id : out_ids) toks.push_back(lc.vocab_tgt.token_of(id));
  return detokenize(toks, mode);
}

}  // namespace memt
