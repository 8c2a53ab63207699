#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memt/model.hpp"

namespace memt {

// One captured attention map together with the memory layout of each axis.
// Stream maps are rectangular: e.g. the bottleneck sequence stream has
// sequence-only rows and memory-only columns.
struct AttentionRecord {
  Stage stage = Stage::enc_self;
  int layer = 0;
  int head = 0;
  Tensor weights;  // row-stochastic [rows, cols]
  std::vector<std::string> row_labels, col_labels;
  MemoryLayout row_layout, col_layout;
};

// Quadrant naming follows the map reading convention: rows are the updated
// positions (queries), columns the attended ones (keys).
//   update  sequence rows x sequence cols
//   write   memory rows   x sequence cols
//   read    sequence rows x memory cols
//   process memory rows   x memory cols
struct QuadrantView {
  Tensor update, write, read, process;  // zero-row/col tensors when absent
};

QuadrantView quadrant_split(const AttentionRecord& rec);

struct QuadrantScore {
  bool present = false;
  double mass_fraction = 0.0;
  double diagonality = 0.0;
  double reverse_diagonality = 0.0;
  double sharpness = 0.0;
  double column_concentration = 0.0;
};

struct QuadrantScores {
  QuadrantScore update, write, read, process;
};

// Fraction of total mass within `band` of the (index-scaled) diagonal;
// reversed measures the anti-diagonal instead.
double diagonality(const Tensor& w, int band, bool reversed);

// Best banded mass over nonzero diagonal shifts, ignoring cells that already
// sit inside the main-diagonal band (those belong to store/fusion patterns).
// reversed scans shifts of the anti-diagonal.
double shifted_diagonality(const Tensor& w, int band, bool reversed);

// Max single-column (or width-`block_width` contiguous block) mass fraction.
double column_concentration(const Tensor& w, int block_width = 1);

// 1 - mean row entropy / ln(cols); one-hot rows give 1, uniform rows 0.
double sharpness(const Tensor& w);

QuadrantScores quadrant_scores(const AttentionRecord& rec, int band);

struct ClassifyThresholds {
  double mass = 0.35;         // write/read quadrant mass fraction
  double diag = 0.6;          // diagonality for store/fusion/copy
  double sharp = 0.7;         // store vs fusion split
  int band = 1;
  double min_process_mass = 0.05;  // structural labels need this much process mass
  double hetero_sharp = 0.3;
};

// Labels out of {write, read, store, fusion, copy_forward, copy_reverse,
// heterogeneous}; may be empty.
std::vector<std::string> classify(const AttentionRecord& rec, const ClassifyThresholds& th);

// ---- attention dump directory ----
// manifest.json lists tokens, layout and one raw little-endian f32 row-major
// matrix file per record.

struct AttentionDump {
  std::vector<std::string> src_tokens, tgt_tokens;  // label source
  int m_enc = 0, m_dec = 0;
  std::vector<AttentionRecord> records;
};

void write_attention_dump(const std::string& dir, const AttentionDump& dump);
AttentionDump read_attention_dump(const std::string& dir);

// Builds labelled records from a capture pass.
AttentionDump make_dump(const std::vector<AttentionCapture>& captures,
                        const std::vector<std::string>& src_tokens,
                        const std::vector<std::string>& tgt_tokens, int m_enc, int m_dec);

// Classification table as JSON plus one PGM heatmap per record under out_dir
// (empty out_dir skips the images).
nlohmann::json analyze_records(const std::vector<AttentionRecord>& records,
                               const ClassifyThresholds& th, const std::string& out_dir);

void write_heatmap_pgm(const std::string& path, const Tensor& w);

}  // namespace memt
