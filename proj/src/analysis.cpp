#include "memt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

namespace memt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Tensor submatrix(const Tensor& w, int64_t r0, int64_t r1, int64_t c0, int64_t c1) {
  Tensor out = Tensor::zeros({r1 - r0, c1 - c0});
  for (int64_t r = r0; r < r1; ++r)
    for (int64_t c = c0; c < c1; ++c) out.at(r - r0, c - c0) = w.at(r, c);
  return out;
}

double total_mass(const Tensor& w) {
  double s = 0.0;
  for (double v : *w.data) s += v;
  return s;
}

}  // namespace

QuadrantView quadrant_split(const AttentionRecord& rec) {
  const int64_t mr = rec.row_layout.m, nr = rec.row_layout.n;
  const int64_t mc = rec.col_layout.m, nc = rec.col_layout.n;
  if (rec.weights.shape[0] != mr + nr || rec.weights.shape[1] != mc + nc)
    throw dim_error("quadrant_split: layout does not cover the matrix");
  QuadrantView q;
  q.process = submatrix(rec.weights, 0, mr, 0, mc);
  q.write = submatrix(rec.weights, 0, mr, mc, mc + nc);
  q.read = submatrix(rec.weights, mr, mr + nr, 0, mc);
  q.update = submatrix(rec.weights, mr, mr + nr, mc, mc + nc);
  return q;
}

double diagonality(const Tensor& w, int band, bool reversed) {
  const int64_t rows = w.shape[0], cols = w.shape[1];
  if (rows == 0 || cols == 0) return 0.0;
  const double total = total_mass(w);
  if (total <= 0.0) return 0.0;
  const double scale_f = static_cast<double>(cols) / static_cast<double>(rows);
  double in_band = 0.0;
  for (int64_t r = 0; r < rows; ++r) {
    const double center = reversed ? static_cast<double>(cols - 1) - static_cast<double>(r) * scale_f
                                   : static_cast<double>(r) * scale_f;
    for (int64_t c = 0; c < cols; ++c)
      if (std::abs(static_cast<double>(c) - center) <= band + 1e-9) in_band += w.at(r, c);
  }
  return in_band / total;
}

double shifted_diagonality(const Tensor& w, int band, bool reversed) {
  const int64_t rows = w.shape[0], cols = w.shape[1];
  if (rows == 0 || cols == 0) return 0.0;
  const double total = total_mass(w);
  if (total <= 0.0) return 0.0;
  const double scale_f = static_cast<double>(cols) / static_cast<double>(rows);
  double best = 0.0;
  for (int64_t s = -(cols - 1); s <= cols - 1; ++s) {
    if (!reversed && s == 0) continue;  // the unshifted diagonal is store/fusion territory
    double mass = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
      const double main_center = static_cast<double>(r) * scale_f;
      const double center =
          (reversed ? static_cast<double>(cols - 1) - main_center : main_center) +
          static_cast<double>(s);
      for (int64_t c = 0; c < cols; ++c) {
        if (std::abs(static_cast<double>(c) - main_center) <= band + 1e-9) continue;
        if (std::abs(static_cast<double>(c) - center) <= band + 1e-9) mass += w.at(r, c);
      }
    }
    best = std::max(best, mass / total);
  }
  return best;
}

double column_concentration(const Tensor& w, int block_width) {
  const int64_t rows = w.shape[0], cols = w.shape[1];
  if (rows == 0 || cols == 0) return 0.0;
  const double total = total_mass(w);
  if (total <= 0.0) return 0.0;
  const int64_t width = std::min<int64_t>(std::max(1, block_width), cols);
  double best = 0.0;
  for (int64_t c0 = 0; c0 + width <= cols; ++c0) {
    double mass = 0.0;
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = c0; c < c0 + width; ++c) mass += w.at(r, c);
    best = std::max(best, mass / total);
  }
  return best;
}

double sharpness(const Tensor& w) {
  const int64_t rows = w.shape[0], cols = w.shape[1];
  if (rows == 0 || cols == 0) return 0.0;
  if (cols == 1) return 1.0;  // a single key column is trivially one-hot
  const double log_cols = std::log(static_cast<double>(cols));
  double acc = 0.0;
  int64_t counted = 0;
  for (int64_t r = 0; r < rows; ++r) {
    double row_sum = 0.0;
    for (int64_t c = 0; c < cols; ++c) row_sum += w.at(r, c);
    if (row_sum <= 0.0) continue;
    double entropy = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      const double p = w.at(r, c) / row_sum;
      if (p > 0.0) entropy -= p * std::log(p);
    }
    acc += entropy / log_cols;
    ++counted;
  }
  if (counted == 0) return 0.0;
  return 1.0 - acc / static_cast<double>(counted);
}

namespace {

QuadrantScore score_of(const Tensor& q, double grand_total, int band) {
  QuadrantScore s;
  s.present = q.shape[0] > 0 && q.shape[1] > 0;
  if (!s.present) return s;
  s.mass_fraction = grand_total > 0.0 ? total_mass(q) / grand_total : 0.0;
  s.diagonality = diagonality(q, band, false);
  s.reverse_diagonality = diagonality(q, band, true);
  s.sharpness = sharpness(q);
  s.column_concentration = column_concentration(q, 1);
  return s;
}

}  // namespace

QuadrantScores quadrant_scores(const AttentionRecord& rec, int band) {
  const QuadrantView q = quadrant_split(rec);
  const double grand = total_mass(rec.weights);
  QuadrantScores s;
  s.update = score_of(q.update, grand, band);
  s.write = score_of(q.write, grand, band);
  s.read = score_of(q.read, grand, band);
  s.process = score_of(q.process, grand, band);
  return s;
}

std::vector<std::string> classify(const AttentionRecord& rec, const ClassifyThresholds& th) {
  const QuadrantScores s = quadrant_scores(rec, th.band);
  const QuadrantView q = quadrant_split(rec);
  std::vector<std::string> labels;

  if (s.write.present && s.write.mass_fraction > th.mass) labels.push_back("write");
  if (s.read.present && s.read.mass_fraction > th.mass) labels.push_back("read");

  // Structural patterns live in the process quadrant; they need a minimum of
  // mass and extent to be meaningful (a 1x1 block is always "diagonal").
  const bool structural_ok = s.process.present && s.process.mass_fraction >= th.min_process_mass &&
                             q.process.shape[0] >= 2 && q.process.shape[1] >= 2;
  if (structural_ok) {
    if (s.process.diagonality > th.diag) {
      labels.push_back(s.process.sharpness > th.sharp ? "store" : "fusion");
    }
    if (shifted_diagonality(q.process, th.band, false) > th.diag) labels.push_back("copy_forward");
    if (shifted_diagonality(q.process, th.band, true) > th.diag) labels.push_back("copy_reverse");
  }

  if (labels.empty() && sharpness(rec.weights) < th.hetero_sharp)
    labels.push_back("heterogeneous");
  return labels;
}

namespace {

std::vector<std::string> mem_labels(int m) {
  std::vector<std::string> out;
  for (int k = 0; k < m; ++k) out.push_back("[mem]" + std::to_string(k));
  return out;
}

std::vector<std::string> concat_labels(const std::vector<std::string>& a,
                                       const std::vector<std::string>& b) {
  std::vector<std::string> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// Axis layouts and labels follow from the stage plus the matrix dimensions
// (the bottleneck sequence stream has memory-only columns, the ctrl stream
// the full concatenation).
void fill_record_labels(AttentionRecord& rec, const std::vector<std::string>& src_tokens,
                        const std::vector<std::string>& tgt_tokens, int m_enc, int m_dec) {
  const int64_t rows = rec.weights.shape[0], cols = rec.weights.shape[1];
  const auto enc_full = concat_labels(mem_labels(m_enc), src_tokens);
  const int64_t n_src = static_cast<int64_t>(src_tokens.size());
  switch (rec.stage) {
    case Stage::enc_self:
      rec.row_labels = enc_full;
      rec.col_labels = enc_full;
      rec.row_layout = {m_enc, n_src};
      rec.col_layout = {m_enc, n_src};
      break;
    case Stage::enc_mem_stream:
      rec.row_labels = mem_labels(m_enc);
      rec.col_labels = enc_full;
      rec.row_layout = {m_enc, 0};
      rec.col_layout = {m_enc, n_src};
      break;
    case Stage::enc_seq_stream:
      rec.row_labels = src_tokens;
      rec.row_layout = {0, n_src};
      if (cols == m_enc) {  // bottleneck: keys are the memory block only
        rec.col_labels = mem_labels(m_enc);
        rec.col_layout = {m_enc, 0};
      } else {
        rec.col_labels = enc_full;
        rec.col_layout = {m_enc, n_src};
      }
      break;
    case Stage::dec_self:
      rec.row_labels = tgt_tokens;
      rec.col_labels = tgt_tokens;
      rec.row_layout = {m_dec, static_cast<int64_t>(tgt_tokens.size()) - m_dec};
      rec.col_layout = rec.row_layout;
      break;
    case Stage::dec_cross:
      rec.row_labels = tgt_tokens;
      rec.col_labels = enc_full;
      rec.row_layout = {m_dec, static_cast<int64_t>(tgt_tokens.size()) - m_dec};
      rec.col_layout = {m_enc, n_src};
      break;
  }
  if (static_cast<int64_t>(rec.row_labels.size()) != rows ||
      static_cast<int64_t>(rec.col_labels.size()) != cols) {
    throw contract_error("attention record labels do not match matrix dims for stage " +
                         std::string(stage_name(rec.stage)));
  }
}

std::string record_filename(const AttentionRecord& rec, size_t idx) {
  return "r" + std::to_string(idx) + "_" + stage_name(rec.stage) + "_l" +
         std::to_string(rec.layer) + "_h" + std::to_string(rec.head) + ".bin";
}

}  // namespace

AttentionDump make_dump(const std::vector<AttentionCapture>& captures,
                        const std::vector<std::string>& src_tokens,
                        const std::vector<std::string>& tgt_tokens, int m_enc, int m_dec) {
  AttentionDump dump;
  dump.src_tokens = src_tokens;
  dump.tgt_tokens = tgt_tokens;
  dump.m_enc = m_enc;
  dump.m_dec = m_dec;
  for (const auto& cap : captures) {
    AttentionRecord rec;
    rec.stage = cap.stage;
    rec.layer = cap.layer;
    rec.head = cap.head;
    rec.weights = cap.weights;
    fill_record_labels(rec, src_tokens, tgt_tokens, m_enc, m_dec);
    dump.records.push_back(std::move(rec));
  }
  return dump;
}

void write_attention_dump(const std::string& dir, const AttentionDump& dump) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "memt-attn-dump-v1";
  manifest["src_tokens"] = dump.src_tokens;
  manifest["tgt_tokens"] = dump.tgt_tokens;
  manifest["m_enc"] = dump.m_enc;
  manifest["m_dec"] = dump.m_dec;
  json records = json::array();
  for (size_t i = 0; i < dump.records.size(); ++i) {
    const AttentionRecord& rec = dump.records[i];
    const std::string fname = record_filename(rec, i);
    records.push_back({{"stage", stage_name(rec.stage)},
                       {"layer", rec.layer},
                       {"head", rec.head},
                       {"rows", rec.weights.shape[0]},
                       {"cols", rec.weights.shape[1]},
                       {"file", fname}});
    std::ofstream bf(dir + "/" + fname, std::ios::binary);
    std::vector<float> f(rec.weights.data->begin(), rec.weights.data->end());
    bf.write(reinterpret_cast<const char*>(f.data()),
             static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
  manifest["records"] = records;
  std::ofstream mf(dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
}

AttentionDump read_attention_dump(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw parse_error("cannot open " + dir + "/manifest.json");
  json manifest = json::parse(mf);
  if (manifest.value("format", "") != "memt-attn-dump-v1")
    throw parse_error("unrecognized attention dump in " + dir);
  AttentionDump dump;
  dump.src_tokens = manifest.at("src_tokens").get<std::vector<std::string>>();
  dump.tgt_tokens = manifest.at("tgt_tokens").get<std::vector<std::string>>();
  dump.m_enc = manifest.at("m_enc").get<int>();
  dump.m_dec = manifest.at("m_dec").get<int>();
  for (const auto& rj : manifest.at("records")) {
    AttentionRecord rec;
    rec.stage = stage_from_name(rj.at("stage").get<std::string>());
    rec.layer = rj.at("layer").get<int>();
    rec.head = rj.at("head").get<int>();
    const int64_t rows = rj.at("rows").get<int64_t>();
    const int64_t cols = rj.at("cols").get<int64_t>();
    std::ifstream bf(dir + "/" + rj.at("file").get<std::string>(), std::ios::binary);
    if (!bf) throw parse_error("missing dump matrix " + rj.at("file").get<std::string>());
    std::vector<float> f(static_cast<size_t>(rows * cols));
    bf.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!bf) throw parse_error("truncated dump matrix " + rj.at("file").get<std::string>());
    rec.weights = Tensor::zeros({rows, cols});
    for (size_t i = 0; i < f.size(); ++i) (*rec.weights.data)[i] = static_cast<double>(f[i]);
    fill_record_labels(rec, dump.src_tokens, dump.tgt_tokens, dump.m_enc, dump.m_dec);
    dump.records.push_back(std::move(rec));
  }
  return dump;
}

void write_heatmap_pgm(const std::string& path, const Tensor& w) {
  const int64_t rows = w.shape[0], cols = w.shape[1];
  double mx = 0.0;
  for (double v : *w.data) mx = std::max(mx, v);
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << cols << " " << rows << "\n255\n";
  for (double v : *w.data) {
    const int g = mx > 0.0 ? static_cast<int>(std::lround(255.0 * v / mx)) : 0;
    out.put(static_cast<char>(std::clamp(g, 0, 255)));
  }
}

nlohmann::json analyze_records(const std::vector<AttentionRecord>& records,
                               const ClassifyThresholds& th, const std::string& out_dir) {
  if (records.empty()) throw contract_error("analyze: no records");
  if (!out_dir.empty()) fs::create_directories(out_dir);
  json table = json::array();
  std::map<std::string, int64_t> label_counts;
  int64_t unclassified = 0;
  for (size_t i = 0; i < records.size(); ++i) {
    const AttentionRecord& rec = records[i];
    const QuadrantScores s = quadrant_scores(rec, th.band);
    const auto labels = classify(rec, th);
    if (labels.empty()) ++unclassified;
    for (const auto& l : labels) label_counts[l]++;
    auto qj = [](const QuadrantScore& q) {
      return json{{"present", q.present},
                  {"mass_fraction", q.mass_fraction},
                  {"diagonality", q.diagonality},
                  {"reverse_diagonality", q.reverse_diagonality},
                  {"sharpness", q.sharpness},
                  {"column_concentration", q.column_concentration}};
    };
    json rj = {{"stage", stage_name(rec.stage)},
               {"layer", rec.layer},
               {"head", rec.head},
               {"labels", labels},
               {"quadrants",
                {{"update", qj(s.update)},
                 {"write", qj(s.write)},
                 {"read", qj(s.read)},
                 {"process", qj(s.process)}}}};
    if (!out_dir.empty()) {
      const std::string img = "heatmap_r" + std::to_string(i) + "_" +
                              std::string(stage_name(rec.stage)) + "_l" +
                              std::to_string(rec.layer) + "_h" + std::to_string(rec.head) +
                              ".pgm";
      write_heatmap_pgm(out_dir + "/" + img, rec.weights);
      rj["heatmap"] = img;
    }
    table.push_back(rj);
  }
  return json{{"records", table},
              {"record_count", records.size()},
              {"label_counts", label_counts},
              {"unclassified", unclassified}};
}

}  // namespace memt
