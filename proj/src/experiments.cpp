#include "memt/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "memt/checkpoint.hpp"

namespace memt {

using nlohmann::json;

json ExperimentReport::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    json rj = {{"setting", r.setting}, {"metrics", r.metrics}};
    if (!r.note.empty()) rj["note"] = r.note;
    rows_j.push_back(rj);
  }
  return json{{"kind", kind},
              {"checkpoint", checkpoint_id},
              {"checkpoint_hash", checkpoint_hash},
              {"seed", seed},
              {"rows", rows_j},
              {"environment", environment},
              {"report_hash", content_hash()}};
}

std::string ExperimentReport::to_table() const {
  // Collect the union of metric names for the header.
  std::vector<std::string> cols;
  for (const auto& r : rows)
    for (const auto& [k, _] : r.metrics)
      if (std::find(cols.begin(), cols.end(), k) == cols.end()) cols.push_back(k);
  std::sort(cols.begin(), cols.end());

  size_t setting_w = 7;
  for (const auto& r : rows) setting_w = std::max(setting_w, r.setting.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(setting_w) + 2) << "setting";
  for (const auto& c : cols) os << std::setw(16) << c;
  os << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(setting_w) + 2) << r.setting;
    for (const auto& c : cols) {
      auto it = r.metrics.find(c);
      if (it == r.metrics.end())
        os << std::setw(16) << (r.note.empty() ? "-" : r.note);
      else
        os << std::setw(16) << std::setprecision(6) << it->second;
    }
    os << "\n";
  }
  return os.str();
}

std::string ExperimentReport::content_hash() const {
  json rows_j = json::array();
  for (const auto& r : rows) rows_j.push_back({{"s", r.setting}, {"m", r.metrics}, {"n", r.note}});
  json core = {{"kind", kind}, {"hash", checkpoint_hash}, {"seed", seed}, {"rows", rows_j}};
  return hash_hex(fnv1a64(core.dump()));
}

std::string environment_stamp() {
  std::ostringstream os;
#if defined(__clang__)
  os << "clang " << __clang_major__ << "." << __clang_minor__;
#elif defined(__GNUC__)
  os << "gcc " << __GNUC__ << "." << __GNUC_MINOR__;
#else
  os << "unknown-compiler";
#endif
#if defined(__linux__)
  os << " linux";
#elif defined(__APPLE__)
  os << " darwin";
#else
  os << " unknown-os";
#endif
  os << " x" << sizeof(void*) * 8;
  return os.str();
}

namespace {

std::string size_setting(int m) {
  std::ostringstream os;
  os << "m=" << std::setw(3) << std::setfill('0') << m;
  return os.str();
}

void metrics_into(ReportRow& row, const EvalMetrics& m) {
  row.metrics["token_accuracy"] = m.token_accuracy;
  row.metrics["sequence_accuracy"] = m.sequence_accuracy;
  row.metrics["bleu4"] = m.bleu4;
}

}  // namespace

ExperimentReport lesion_grid(const Model& model, const std::vector<int>& sizes,
                             const std::vector<Pair>& eval_data, const std::string& checkpoint_id,
                             const std::string& checkpoint_hash, uint64_t lesion_init_seed) {
  if (model.config().variant == Variant::baseline)
    throw config_error("lesion_grid: model has no memory");
  ExperimentReport rep;
  rep.kind = "lesion";
  rep.checkpoint_id = checkpoint_id;
  rep.checkpoint_hash = checkpoint_hash;
  rep.seed = lesion_init_seed;
  rep.environment = environment_stamp();

  std::vector<int> sorted = sizes;
  std::sort(sorted.begin(), sorted.end());
  const bool bottleneck = model.config().variant == Variant::mem_bottleneck ||
                          model.config().variant == Variant::mem_bottleneck_skip;
  for (int m : sorted) {
    ReportRow row;
    row.setting = size_setting(m);
    if (m == 0 && bottleneck) {
      row.note = "not applicable";
      rep.rows.push_back(row);
      continue;
    }
    if (m == model.config().m_enc) {
      metrics_into(row, evaluate(model, eval_data));  // identity lesion = plain eval
    } else {
      Model lesioned = lesion_memory(model, m, lesion_init_seed);
      metrics_into(row, evaluate(lesioned, eval_data));
    }
    rep.rows.push_back(row);
  }
  return rep;
}

ExtensionResult extend_memory(const Model& model, int add, int64_t finetune_steps,
                              uint64_t init_seed, const DataSource& data, const TrainConfig& tc,
                              const std::string& checkpoint_id,
                              const std::string& checkpoint_hash) {
  if (add < 1) throw config_error("extend_memory: add must be >= 1");
  ExperimentReport rep;
  rep.kind = "extension";
  rep.checkpoint_id = checkpoint_id;
  rep.checkpoint_hash = checkpoint_hash;
  rep.seed = init_seed;
  rep.environment = environment_stamp();

  const int old_m = model.config().m_enc;
  Model extended = lesion_memory(model, old_m + add, init_seed);

  {
    ReportRow before;
    before.setting = "before:" + size_setting(old_m + add);
    metrics_into(before, evaluate(extended, data.heldout));
    before.metrics["eval_loss"] = eval_loss(extended, data.heldout);
    rep.rows.push_back(before);
  }

  TrainConfig ft = tc;
  ft.steps = finetune_steps;
  ft.stop_token_acc = -1.0;
  Adam optim(extended.params(), ft.beta1, ft.beta2, ft.adam_eps);
  TrainResult tr = train(extended, data, ft, optim, nullptr, nullptr, 0);

  {
    ReportRow after;
    after.setting = "after:" + size_setting(old_m + add);
    metrics_into(after, evaluate(extended, data.heldout));
    after.metrics["eval_loss"] = eval_loss(extended, data.heldout);
    after.metrics["finetune_steps"] = static_cast<double>(tr.steps_done);
    rep.rows.push_back(after);
  }
  return {std::move(extended), std::move(rep)};
}

int64_t attention_score_madds(Variant v, int64_t n, int64_t m, int64_t d_model) {
  switch (v) {
    case Variant::baseline:
      return n * n * d_model;
    case Variant::mem:
    case Variant::mem_ctrl:
    case Variant::mem_ctrl_shared:
      return (n + m) * (n + m) * d_model;
    case Variant::mem_bottleneck:
      return m * (m + n) * d_model + n * m * d_model;
    case Variant::mem_bottleneck_skip:
      return m * (m + n) * d_model;
  }
  return 0;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw contract_error("loglog_slope: need >= 2 points");
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

ExperimentReport complexity_bench(const std::vector<Variant>& variants,
                                  const std::vector<int>& lengths, int m, int trials,
                                  const BenchDims& dims) {
  if (lengths.size() < 2) throw contract_error("complexity_bench: need >= 2 lengths");
  ExperimentReport rep;
  rep.kind = "bench";
  rep.checkpoint_id = "(generated)";
  rep.checkpoint_hash = "-";
  rep.seed = 1;
  rep.environment = environment_stamp();

  std::vector<int> ns = lengths;
  std::sort(ns.begin(), ns.end());

  for (Variant v : variants) {
    const int vm = v == Variant::baseline ? 0 : m;
    ModelConfig cfg;
    cfg.variant = v;
    cfg.n_layers_enc = dims.n_layers;
    cfg.n_layers_dec = 1;
    cfg.d_model = dims.d_model;
    cfg.d_ff = dims.d_ff;
    cfg.h = dims.h;
    cfg.p_drop = 0.0;
    cfg.m_enc = vm;
    cfg.m_dec = 0;
    cfg.vocab_src = 32;
    cfg.vocab_tgt = 32;
    cfg.max_len = *std::max_element(ns.begin(), ns.end()) + vm + 1;
    cfg.seed = 7;
    Model model(cfg);

    std::vector<double> xs, analytic_ys, wall_ys;
    for (int n : ns) {
      std::vector<int> tokens(static_cast<size_t>(n));
      Rng rng(Rng::derive(11, static_cast<uint64_t>(n)));
      for (auto& t : tokens) t = static_cast<int>(rng.range(kReservedIds, cfg.vocab_src));

      NoGradGuard no_grad;
      ForwardCtx ctx;
      model.encode(tokens, ctx);  // warmup
      std::vector<double> times;
      for (int trial = 0; trial < std::max(1, trials); ++trial) {
        const auto t0 = std::chrono::steady_clock::now();
        model.encode(tokens, ctx);
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
      }
      std::sort(times.begin(), times.end());
      const double median = times[times.size() / 2];
      const int64_t score_madds =
          attention_score_madds(v, n, vm, cfg.d_model) * cfg.n_layers_enc;

      ReportRow row;
      row.setting = std::string(variant_name(v)) + ":n=" + std::to_string(n);
      row.metrics["analytic_score_madds"] = static_cast<double>(score_madds);
      row.metrics["wall_time_s"] = median;
      rep.rows.push_back(row);

      xs.push_back(static_cast<double>(n));
      analytic_ys.push_back(static_cast<double>(score_madds));
      wall_ys.push_back(median);
    }
    ReportRow fit;
    fit.setting = std::string(variant_name(v)) + ":slopes";
    fit.metrics["analytic_slope"] = loglog_slope(xs, analytic_ys);
    fit.metrics["wall_slope"] = loglog_slope(xs, wall_ys);
    rep.rows.push_back(fit);
  }
  return rep;
}

}  // namespace memt
