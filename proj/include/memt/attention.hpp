#pragma once

#include <cstdint>
#include <vector>

#include "memt/tensor.hpp"

namespace memt {

enum class MaskKind { none, padding, causal, causal_padding };

// Boolean attention mask; true = query row may attend to that key column.
// Applied as an additive -1e9 on the logits of disallowed positions.
struct AttentionMask {
  int64_t rows_q = 0;
  int64_t rows_k = 0;
  std::vector<uint8_t> allowed;  // row-major [rows_q, rows_k]
  MaskKind kind = MaskKind::none;

  bool at(int64_t q, int64_t k) const {
    return allowed[static_cast<size_t>(q * rows_k + k)] != 0;
  }
  void set(int64_t q, int64_t k, bool v) {
    allowed[static_cast<size_t>(q * rows_k + k)] = v ? 1 : 0;
  }
};

// allowed[i][j] = j <= i.
AttentionMask make_causal_mask(int64_t n);

// Keys flagged as pad are blocked for every query; the first mem_count key
// columns are memory and must never be flagged (memory is always attendable).
AttentionMask make_padding_mask(const std::vector<bool>& key_is_pad, int64_t nq,
                                int64_t mem_count);

// Intersection (logical AND) of two masks of identical shape.
AttentionMask combine_masks(const AttentionMask& a, const AttentionMask& b);

struct SdpResult {
  Tensor out;      // [nq, d_v]
  Tensor weights;  // [nq, nk], detached copy for inspection
};

// softmax(q k^T / sqrt(d_k)) v with optional mask. A query row with every key
// masked has no valid softmax and is reported as a contract error.
SdpResult sdp_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const AttentionMask* mask);

struct MultiHeadWeights {
  Tensor wq, wk, wv, wo;  // each [d_model, d_model]
  int h = 1;

  int64_t d_model() const { return wq.shape[0]; }
  int64_t d_k() const { return d_model() / h; }
};

struct MultiHeadResult {
  Tensor out;                        // [nq, d_model]
  std::vector<Tensor> head_weights;  // h matrices [nq, nk], only if captured
};

// Projects, splits into h contiguous d_k-wide column blocks, attends per head,
// concatenates and applies wo. Per-head weights are copied out only when
// capture is set; training leaves it off.
MultiHeadResult multi_head(const Tensor& x_q, const Tensor& x_kv, const MultiHeadWeights& w,
                           const AttentionMask* mask, bool capture);

}  // namespace memt
