// Acceptance suite: one pass/fail line per criterion, non-zero exit when any
// criterion fails. Long-running criteria print their durations.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "../gradcheck.hpp"
#include "../synthetic_maps.hpp"
#include "memt/analysis.hpp"
#include "memt/checkpoint.hpp"
#include "memt/experiments.hpp"
#include "memt/workflow.hpp"

using namespace memt;
namespace fs = std::filesystem;

namespace {

struct Failure {
  std::string reason;
};

void expect(bool ok, const std::string& reason) {
  if (!ok) throw Failure{reason};
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, bool rg = false) {
  Tensor t = Tensor::zeros(std::move(shape), rg);
  for (double& v : *t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape && *a.data == *b.data;
}

ModelConfig grad_config(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.n_layers_enc = 2;
  c.n_layers_dec = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.h = 2;
  c.p_drop = 0.0;
  c.m_enc = v == Variant::baseline ? 0 : 3;
  c.m_dec = v == Variant::baseline ? 0 : 2;
  c.vocab_src = 12;
  c.vocab_tgt = 14;
  c.max_len = 64;
  c.seed = 7;
  return c;
}

// ---- criterion 1 ----

void criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(19);
  double worst_op = 0.0;

  auto check_op = [&](const std::function<Tensor(std::vector<Parameter>&)>& op,
                      std::vector<std::vector<int64_t>> shapes, const std::string& name) {
    std::vector<Parameter> params;
    for (size_t i = 0; i < shapes.size(); ++i)
      params.push_back({name + ".p" + std::to_string(i), random_tensor(shapes[i], rng, true)});
    Tensor loss = op(params);
    backward(loss);
    auto numeric = [&]() {
      NoGradGuard off;
      std::vector<Parameter> view = params;
      return op(view).scalar();
    };
    const auto res = memt::testing::finite_diff_check(numeric, params);
    expect(res.max_rel_err < 1e-4,
           name + " gradient err " + fmt(res.max_rel_err) + " at " + res.worst);
    worst_op = std::max(worst_op, res.max_rel_err);
  };

  check_op([](auto& p) { return sum(matmul(p[0].tensor, p[1].tensor)); }, {{3, 4}, {4, 2}},
           "matmul");
  check_op([](auto& p) { return sum(mul(softmax(p[0].tensor, 1), p[1].tensor)); },
           {{4, 5}, {4, 5}}, "softmax");
  check_op(
      [](auto& p) {
        return sum(mul(layer_norm(p[0].tensor, p[1].tensor, p[2].tensor), p[3].tensor));
      },
      {{3, 8}, {8}, {8}, {3, 8}}, "layer_norm");
  check_op([](auto& p) { return sum(mul(relu(p[0].tensor), p[1].tensor)); }, {{4, 4}, {4, 4}},
           "relu");
  check_op([](auto& p) { return cross_entropy(p[0].tensor, {1, 0, 3, 2}, -1); }, {{4, 5}},
           "cross_entropy");
  check_op([](auto& p) { return sum(mul(embedding(p[0].tensor, {2, 0, 1}), p[1].tensor)); },
           {{4, 6}, {3, 6}}, "embedding");
  check_op(
      [](auto& p) {
        Rng fixed(55);
        return sum(dropout(p[0].tensor, 0.3, true, fixed));
      },
      {{5, 5}}, "dropout(frozen mask)");
  {
    // multi-head attention as one op
    std::vector<Parameter> params;
    MultiHeadWeights w;
    w.h = 2;
    w.wq = random_tensor({8, 8}, rng, true);
    w.wk = random_tensor({8, 8}, rng, true);
    w.wv = random_tensor({8, 8}, rng, true);
    w.wo = random_tensor({8, 8}, rng, true);
    params.push_back({"mha.wq", w.wq});
    params.push_back({"mha.wk", w.wk});
    params.push_back({"mha.wv", w.wv});
    params.push_back({"mha.wo", w.wo});
    Tensor x = random_tensor({5, 8}, rng, true);
    params.push_back({"mha.x", x});
    Tensor probe = random_tensor({5, 8}, rng);
    AttentionMask causal = make_causal_mask(5);
    auto forward = [&]() { return sum(mul(multi_head(x, x, w, &causal, false).out, probe)); };
    backward(forward());
    auto numeric = [&]() {
      NoGradGuard off;
      return forward().scalar();
    };
    const auto res = memt::testing::finite_diff_check(numeric, params);
    expect(res.max_rel_err < 1e-4, "multi_head gradient err " + fmt(res.max_rel_err));
    worst_op = std::max(worst_op, res.max_rel_err);
  }

  // end-to-end loss of every variant, n=5 source tokens
  double worst_model = 0.0;
  std::string worst_name;
  for (Variant v :
       {Variant::baseline, Variant::mem, Variant::mem_ctrl, Variant::mem_ctrl_shared,
        Variant::mem_bottleneck, Variant::mem_bottleneck_skip}) {
    ModelConfig cfg = grad_config(v);
    Model model(cfg);
    const std::vector<int> src{4, 5, 6, 7, 8};
    std::vector<int> tgt_in, tgt_out;
    for (int k = 0; k < cfg.m_dec; ++k) tgt_in.push_back(cfg.dec_mem_id(k));
    tgt_in.push_back(kBosId);
    for (int t : {4, 5, 6}) tgt_in.push_back(t);
    tgt_out.assign(tgt_in.begin() + 1, tgt_in.end());
    tgt_out.push_back(kEosId);

    auto loss_fn = [&]() {
      ForwardCtx ctx;
      auto enc = model.encode(src, ctx);
      return cross_entropy(model.decode(tgt_in, enc.h, ctx), tgt_out, kPadId);
    };
    model.zero_grads();
    backward(loss_fn());
    auto numeric = [&]() {
      NoGradGuard off;
      return loss_fn().scalar();
    };
    const auto res = memt::testing::finite_diff_check(numeric, model.params());
    expect(res.max_rel_err < 1e-4, std::string(variant_name(v)) + " end-to-end err " +
                                       fmt(res.max_rel_err) + " at " + res.worst);
    if (res.max_rel_err > worst_model) {
      worst_model = res.max_rel_err;
      worst_name = variant_name(v);
    }
  }
  const double dt = seconds_since(t0);
  expect(dt < 120.0, "gradient suite took " + fmt(dt) + "s (budget 120s)");
  std::fprintf(stderr, "  [1] worst op err %.3g, worst model err %.3g (%s), %.1fs\n", worst_op,
               worst_model, worst_name.c_str(), dt);
}

// ---- criterion 2 ----

void criterion_reductions() {
  // (a) MemTransformer with zero memory == baseline, bitwise
  {
    Model base(grad_config(Variant::baseline));
    ModelConfig mem_cfg = grad_config(Variant::mem);
    mem_cfg.m_enc = 0;
    mem_cfg.m_dec = 0;
    Model mem(mem_cfg);
    ForwardCtx ctx;
    const std::vector<int> tokens{4, 5, 6, 7, 8};
    expect(bitwise_equal(base.encode(tokens, ctx).h, mem.encode(tokens, ctx).h),
           "mem(m=0) encoder output differs from baseline");
    const std::vector<int> tgt{kBosId, 4, 5, 6};
    expect(bitwise_equal(base.decode(tgt, base.encode(tokens, ctx).h, ctx),
                         mem.decode(tgt, mem.encode(tokens, ctx).h, ctx)),
           "mem(m=0) decoder logits differ from baseline");
  }
  // (b) MemCtrl with copied controller weights == MemTransformer within 1e-12
  {
    Model mem(grad_config(Variant::mem));
    Model ctrl(grad_config(Variant::mem_ctrl));
    for (auto& p : ctrl.params()) {
      std::string want = p.name;
      auto sub = [&](const std::string& from) {
        const size_t pos = want.find(from);
        if (pos != std::string::npos) want = want.substr(0, pos) + ".self." +
                                             want.substr(pos + from.size());
      };
      sub(".mem.");
      sub(".seq.");
      const Parameter* src = mem.find_param(want);
      expect(src != nullptr, "no source parameter for " + p.name);
      *p.tensor.data = *src->tensor.data;
    }
    ForwardCtx ctx;
    const std::vector<int> tokens{4, 5, 6, 9};
    auto a = mem.encode(tokens, ctx);
    auto b = ctrl.encode(tokens, ctx);
    double worst = 0.0;
    for (size_t i = 0; i < a.h.data->size(); ++i)
      worst = std::max(worst, std::fabs((*a.h.data)[i] - (*b.h.data)[i]));
    expect(worst < 1e-12, "ctrl/mem mismatch " + fmt(worst));
  }
  // (c) lesion at the trained size == unmodified eval, exactly
  {
    ModelConfig cfg = grad_config(Variant::mem);
    Model model(cfg);
    Vocab vocab = Vocab::synthetic(cfg.vocab_tgt, cfg.m_dec);
    auto pairs = gen_task(TaskKind::copy, 2, 5, vocab, 24, 5);
    Model same = lesion_memory(model, cfg.m_enc, 1234);
    EvalMetrics plain = evaluate(model, pairs);
    EvalMetrics lesioned = evaluate(same, pairs);
    expect(plain.token_accuracy == lesioned.token_accuracy &&
               plain.sequence_accuracy == lesioned.sequence_accuracy &&
               plain.bleu4 == lesioned.bleu4,
           "identity lesion changed metrics");
  }
}

// ---- criterion 3 ----

void criterion_isolation() {
  ModelConfig cfg;
  cfg.variant = Variant::mem_bottleneck;
  cfg.n_layers_enc = 2;
  cfg.n_layers_dec = 1;
  cfg.d_model = 8;
  cfg.d_ff = 16;
  cfg.h = 2;
  cfg.p_drop = 0.0;
  cfg.m_enc = 3;
  cfg.vocab_src = 12;
  cfg.vocab_tgt = 12;
  cfg.max_len = 64;
  cfg.seed = 23;
  Model model(cfg);
  const int64_t n = 6;
  Rng rng(29);
  std::vector<Tensor> frozen;
  for (int l = 0; l < cfg.n_layers_enc; ++l)
    frozen.push_back(random_tensor({cfg.m_enc, cfg.d_model}, rng));
  ForwardCtx ctx;
  auto run = [&](const Tensor& x0) {
    Tensor x = x0;
    for (int l = 0; l < cfg.n_layers_enc; ++l)
      x = bottleneck_seq_update(x, frozen[static_cast<size_t>(l)],
                                model.enc_seq_stream()[static_cast<size_t>(l)], cfg, ctx, l);
    return x;
  };
  Tensor x_seq = random_tensor({n, cfg.d_model}, rng);
  Tensor base = run(x_seq);
  for (int64_t i = 0; i < n; ++i) {
    Tensor perturbed = x_seq.detach();
    perturbed.at(i, 2) += 0.25;
    Tensor out = run(perturbed);
    for (int64_t r = 0; r < n; ++r) {
      double diff = 0.0;
      for (int64_t c = 0; c < cfg.d_model; ++c)
        diff = std::max(diff, std::fabs(out.at(r, c) - base.at(r, c)));
      if (r == i)
        expect(diff > 1e-9, "perturbation at row " + std::to_string(i) + " had no effect");
      else
        expect(diff <= 1e-12, "cross-token leak: perturbing row " + std::to_string(i) +
                                  " changed row " + std::to_string(r) + " by " + fmt(diff));
    }
  }
}

// ---- criterion 4 ----

void criterion_complexity() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport rep = complexity_bench({Variant::baseline, Variant::mem_bottleneck},
                                          {128, 256, 512, 1024}, 20, 3, BenchDims{});
  double base_a = 0, base_w = 0, bott_a = 0, bott_w = 0;
  for (const auto& row : rep.rows) {
    if (row.setting == "baseline:slopes") {
      base_a = row.metrics.at("analytic_slope");
      base_w = row.metrics.at("wall_slope");
    }
    if (row.setting == "mem_bottleneck:slopes") {
      bott_a = row.metrics.at("analytic_slope");
      bott_w = row.metrics.at("wall_slope");
    }
  }
  expect(base_a >= 1.90 && base_a <= 2.00, "baseline analytic slope " + fmt(base_a));
  expect(bott_a >= 0.95 && bott_a <= 1.05, "bottleneck analytic slope " + fmt(bott_a));
  expect(base_w >= 1.6 && base_w <= 2.4, "baseline wall slope " + fmt(base_w));
  expect(bott_w >= 0.7 && bott_w <= 1.4, "bottleneck wall slope " + fmt(bott_w));
  const double dt = seconds_since(t0);
  expect(dt < 300.0, "bench took " + fmt(dt) + "s (budget 300s)");
  std::fprintf(stderr,
               "  [4] analytic slopes: baseline %.4f, bottleneck %.4f; wall: %.2f / %.2f; %.0fs\n",
               base_a, bott_a, base_w, bott_w, dt);
}

// ---- criterion 5 (and context for 6, 7, 11) ----

struct TrainedRun {
  std::optional<Model> model;
  DataSource data;
  int64_t steps = 0;
  double heldout_acc = 0.0;
  double seconds = 0.0;
};

TrainedRun train_small(Variant v, int m_enc, uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig cfg;
  cfg.variant = v;
  cfg.n_layers_enc = 2;
  cfg.n_layers_dec = 2;
  cfg.d_model = 64;
  cfg.d_ff = 256;
  cfg.h = 4;
  cfg.p_drop = 0.1;
  cfg.m_enc = m_enc;
  cfg.m_dec = 0;
  cfg.vocab_src = 20;
  cfg.vocab_tgt = 20;
  cfg.max_len = 64;
  cfg.seed = seed;

  TrainedRun run;
  run.data.synthetic = true;
  run.data.kind = TaskKind::copy;
  run.data.len_min = 2;
  run.data.len_max = 16;
  run.data.vocab_src = Vocab::synthetic(20, 0);
  run.data.vocab_tgt = Vocab::synthetic(20, 0);
  run.data.heldout = gen_task(TaskKind::copy, 2, 16, run.data.vocab_tgt, 500,
                              Rng::derive(seed, 0xe7a1));
  run.data.seed = seed;

  TrainConfig tc;
  tc.steps = 5000;
  tc.batch_size = 64;
  tc.warmup_steps = 1000;
  tc.eval_every = 250;
  tc.stop_token_acc = 0.99;
  tc.seed = seed;

  run.model.emplace(cfg);
  Adam optim(run.model->params(), tc.beta1, tc.beta2, tc.adam_eps);
  TrainResult res = train(*run.model, run.data, tc, optim, nullptr, nullptr, 0);
  expect(!res.diverged, std::string(variant_name(v)) + " diverged");
  run.steps = res.steps_done;
  run.heldout_acc = token_accuracy(*run.model, run.data.heldout);
  run.seconds = seconds_since(t0);
  return run;
}

void criterion_learning(TrainedRun& baseline_out, TrainedRun& mem_out) {
  baseline_out = train_small(Variant::baseline, 0, 42);
  std::fprintf(stderr, "  [5] baseline: %.4f heldout token acc after %lld steps (%.0fs)\n",
               baseline_out.heldout_acc, static_cast<long long>(baseline_out.steps),
               baseline_out.seconds);
  expect(baseline_out.heldout_acc >= 0.99,
         "baseline reached only " + fmt(baseline_out.heldout_acc) + " after " +
             std::to_string(baseline_out.steps) + " steps");
  expect(baseline_out.steps <= 5000, "baseline exceeded the step budget");
  expect(baseline_out.seconds <= 2700.0, "baseline run exceeded 45 minutes");

  mem_out = train_small(Variant::mem, 10, 42);
  std::fprintf(stderr, "  [5] mem(10):  %.4f heldout token acc after %lld steps (%.0fs)\n",
               mem_out.heldout_acc, static_cast<long long>(mem_out.steps), mem_out.seconds);
  expect(mem_out.heldout_acc >= 0.99, "MemTransformer reached only " + fmt(mem_out.heldout_acc) +
                                          " after " + std::to_string(mem_out.steps) + " steps");
  expect(mem_out.steps <= 5000, "MemTransformer exceeded the step budget");
  expect(mem_out.seconds <= 2700.0, "MemTransformer run exceeded 45 minutes");
}

// ---- criterion 6 ----

void criterion_lesion_harness(const TrainedRun& mem_run) {
  const Model& model = *mem_run.model;
  const uint64_t seed = lesion_seed_for(model.config());
  ExperimentReport rep =
      lesion_grid(model, {0, 2, 5, 10, 20, 30}, mem_run.data.heldout, "(in-memory)", "-", seed);
  expect(rep.rows.size() == 6, "expected 6 rows, got " + std::to_string(rep.rows.size()));
  const std::vector<std::string> want{"m=000", "m=002", "m=005", "m=010", "m=020", "m=030"};
  for (size_t i = 0; i < want.size(); ++i)
    expect(rep.rows[i].setting == want[i], "row " + std::to_string(i) + " is " +
                                               rep.rows[i].setting);
  EvalMetrics plain = evaluate(model, mem_run.data.heldout);
  const auto& trained_row = rep.rows[3];
  expect(trained_row.metrics.at("token_accuracy") == plain.token_accuracy &&
             trained_row.metrics.at("sequence_accuracy") == plain.sequence_accuracy &&
             trained_row.metrics.at("bleu4") == plain.bleu4,
         "m'=10 row does not equal the standard evaluation bitwise");
  const std::string table = rep.to_table();
  for (const auto& s : want)
    expect(table.find(s) != std::string::npos, "table is missing row " + s);
  std::fprintf(stderr, "  [6] lesion table:\n%s", table.c_str());
}

// ---- criterion 7 ----

void criterion_extension(const TrainedRun& mem_run) {
  const Model& model = *mem_run.model;
  const uint64_t seed = lesion_seed_for(model.config());
  TrainConfig tc;
  tc.batch_size = 64;
  tc.warmup_steps = 1000;
  tc.eval_every = 0;
  tc.seed = 77;

  ExtensionResult zero = extend_memory(model, 5, 0, seed, mem_run.data, tc, "(in-memory)", "-");
  ExperimentReport grid = lesion_grid(model, {15}, mem_run.data.heldout, "(in-memory)", "-", seed);
  const auto& lesion_row = grid.rows[0];
  for (const auto* row : {&zero.report.rows[0], &zero.report.rows[1]}) {
    expect(row->metrics.at("token_accuracy") == lesion_row.metrics.at("token_accuracy") &&
               row->metrics.at("sequence_accuracy") ==
                   lesion_row.metrics.at("sequence_accuracy") &&
               row->metrics.at("bleu4") == lesion_row.metrics.at("bleu4"),
           "0-step extension metrics differ from the m'=15 lesion row");
  }

  ExtensionResult tuned = extend_memory(model, 5, 200, seed, mem_run.data, tc, "(in-memory)", "-");
  const double before = tuned.report.rows[0].metrics.at("eval_loss");
  const double after = tuned.report.rows[1].metrics.at("eval_loss");
  expect(after <= before, "fine-tuning raised the loss: " + fmt(before) + " -> " + fmt(after));
  std::fprintf(stderr, "  [7] extension eval loss %.5f -> %.5f after 200 steps\n", before, after);
}

// ---- criterion 8 ----

void criterion_bleu() {
  std::vector<std::vector<int>> corpus{{4, 5, 6, 7, 8}, {9, 10, 11, 12}, {5, 6}};
  expect(std::fabs(corpus_bleu(corpus, corpus).bleu - 100.0) < 1e-9,
         "identical corpus did not score 100");

  BleuResult clip = corpus_bleu({{4, 4, 4, 4, 4, 4, 4}}, {{4, 5, 6, 7, 4, 8}});
  expect(std::fabs(clip.precisions[0] - 2.0 / 7.0) < 1e-12,
         "clipped unigram precision " + fmt(clip.precisions[0]));

  std::vector<std::vector<int>> hyps{{4, 5, 6, 7}, {4, 5, 8}};
  std::vector<std::vector<int>> refs{{4, 5, 6, 7}, {4, 5, 9}};
  const double p1 = 6.0 / 7.0, p2 = 4.0 / 5.0, p3 = 2.0 / 3.0, p4 = 1.0;
  const double expect_bleu =
      100.0 * std::exp((std::log(p1) + std::log(p2) + std::log(p3) + std::log(p4)) / 4.0);
  const double got = corpus_bleu(hyps, refs).bleu;
  expect(std::fabs(got - expect_bleu) < 1e-6,
         "hand-computed corpus: got " + fmt(got) + ", want " + fmt(expect_bleu));
}

// ---- criterion 9 ----

void criterion_noam() {
  const double lr = noam_lr(4000, 128, 4000);
  expect(std::fabs(lr - 0.00139754) < 1e-8, "noam lr(4000) = " + fmt(lr));
}

// ---- criterion 10 ----

void criterion_analyzer() {
  const ClassifyThresholds th;
  const auto records = memt::testing::synthetic_records();
  using Labels = std::vector<std::string>;
  const std::vector<std::string> names{"identity-process", "anti-diagonal", "write-heavy",
                                       "read-heavy",       "uniform",       "shifted-diagonal"};
  const std::vector<Labels> want{{"store"}, {"copy_reverse"}, {"write"},
                                 {"read"},  {},               {"copy_forward"}};
  for (size_t i = 0; i < records.size(); ++i) {
    const Labels got = classify(records[i], th);
    if (i == 4) {
      expect(got.empty() || got == Labels{"heterogeneous"},
             names[i] + ": got labels " + (got.empty() ? "{}" : got[0]));
    } else {
      expect(got == want[i], names[i] + ": wrong label set" +
                                 (got.empty() ? " {}" : " {" + got[0] + ",...}"));
    }
    QuadrantScores s = quadrant_scores(records[i], th.band);
    const double total = s.process.mass_fraction + s.write.mass_fraction +
                         s.read.mass_fraction + s.update.mass_fraction;
    expect(std::fabs(total - 1.0) < 1e-9, names[i] + ": quadrant masses sum to " + fmt(total));
  }
}

// ---- criterion 11 ----

void criterion_persistence(const TrainedRun& mem_run) {
  const Model& model = *mem_run.model;
  const std::string dir =
      (fs::temp_directory_path() / ("memt_acc_ckpt_" + std::to_string(::getpid()))).string();
  const std::string dump_dir =
      (fs::temp_directory_path() / ("memt_acc_dump_" + std::to_string(::getpid()))).string();
  fs::remove_all(dir);
  fs::remove_all(dump_dir);

  Vocab vocab = Vocab::synthetic(20, 0);
  save_checkpoint(dir, model, vocab, vocab, {{"task", "copy"}}, mem_run.steps, nullptr);
  LoadedCheckpoint lc = load_checkpoint(dir);
  ForwardCtx ctx;
  const std::vector<int> tokens{4, 9, 12, 7, 5};
  expect(bitwise_equal(model.encode(tokens, ctx).h, lc.model.encode(tokens, ctx).h),
         "loaded checkpoint's encoder output differs");
  const std::vector<int> tgt{kBosId, 4, 9, 12};
  expect(bitwise_equal(model.decode(tgt, model.encode(tokens, ctx).h, ctx),
                       lc.model.decode(tgt, lc.model.encode(tokens, ctx).h, ctx)),
         "loaded checkpoint's logits differ");

  // attention dump: captured tensors survive the f32 round trip
  std::vector<AttentionCapture> captures;
  ForwardCtx cap_ctx;
  cap_ctx.capture = true;
  cap_ctx.sink = &captures;
  auto enc = model.encode(tokens, cap_ctx);
  model.decode(tgt, enc.h, cap_ctx);
  std::vector<std::string> src_labels, tgt_labels;
  for (int id : tokens) src_labels.push_back(vocab.token_of(id));
  for (int id : tgt) tgt_labels.push_back(vocab.token_of(id));
  AttentionDump dump = make_dump(captures, src_labels, tgt_labels, model.config().m_enc,
                                 model.config().m_dec);
  write_attention_dump(dump_dir, dump);
  AttentionDump loaded = read_attention_dump(dump_dir);
  expect(loaded.records.size() == dump.records.size(), "dump record count changed");
  for (size_t r = 0; r < dump.records.size(); ++r) {
    const auto& a = dump.records[r].weights;
    const auto& b = loaded.records[r].weights;
    expect(a.shape == b.shape, "dump record shape changed");
    for (size_t i = 0; i < a.data->size(); ++i) {
      const double f32 = static_cast<double>(static_cast<float>((*a.data)[i]));
      expect((*b.data)[i] == f32, "dump value differs beyond f32 rounding");
    }
  }
  fs::remove_all(dir);
  fs::remove_all(dump_dir);
}

}  // namespace

int main() {
  TrainedRun baseline_run, mem_run;
  int failures = 0;
  const auto run = [&](int id, const std::string& name, const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
      std::printf("PASS  %2d  %s (%.1fs)\n", id, name.c_str(), seconds_since(t0));
    } catch (const Failure& f) {
      std::printf("FAIL  %2d  %s: %s (%.1fs)\n", id, name.c_str(), f.reason.c_str(),
                  seconds_since(t0));
      ++failures;
    } catch (const std::exception& e) {
      std::printf("FAIL  %2d  %s: unexpected error: %s (%.1fs)\n", id, name.c_str(), e.what(),
                  seconds_since(t0));
      ++failures;
    }
    std::fflush(stdout);
  };

  run(1, "gradient suite (ops + all variants, tiny dims)", criterion_gradients);
  run(2, "reduction equivalences", criterion_reductions);
  run(3, "bottleneck isolation under frozen memory", criterion_isolation);
  run(4, "complexity scaling slopes", criterion_complexity);
  run(5, "copy-task learning to 99% token accuracy",
      [&] { criterion_learning(baseline_run, mem_run); });
  const bool trained = mem_run.model.has_value() && mem_run.heldout_acc > 0.0;
  run(6, "lesion harness on the trained model", [&] {
    expect(trained, "no trained model (criterion 5 failed)");
    criterion_lesion_harness(mem_run);
  });
  run(7, "memory extension harness", [&] {
    expect(trained, "no trained model (criterion 5 failed)");
    criterion_extension(mem_run);
  });
  run(8, "corpus BLEU worked examples", criterion_bleu);
  run(9, "noam schedule pinned value", criterion_noam);
  run(10, "attention-pattern classifier on constructed maps", criterion_analyzer);
  run(11, "checkpoint and attention-dump persistence", [&] {
    expect(trained, "no trained model (criterion 5 failed)");
    criterion_persistence(mem_run);
  });

  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
