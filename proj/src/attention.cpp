#include "memt/attention.hpp"

#include <cmath>
#include <string>

namespace memt {

namespace {

constexpr double kMaskSentinel = -1e9;

}  // namespace

AttentionMask make_causal_mask(int64_t n) {
  if (n < 1) throw contract_error("make_causal_mask: n must be >= 1");
  AttentionMask m;
  m.rows_q = n;
  m.rows_k = n;
  m.kind = MaskKind::causal;
  m.allowed.assign(static_cast<size_t>(n * n), 0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j <= i; ++j) m.set(i, j, true);
  return m;
}

AttentionMask make_padding_mask(const std::vector<bool>& key_is_pad, int64_t nq,
                                int64_t mem_count) {
  const int64_t nk = static_cast<int64_t>(key_is_pad.size());
  for (int64_t j = 0; j < mem_count && j < nk; ++j) {
    if (key_is_pad[static_cast<size_t>(j)]) {
      throw contract_error("make_padding_mask: memory key column " + std::to_string(j) +
                           " flagged as pad");
    }
  }
  AttentionMask m;
  m.rows_q = nq;
  m.rows_k = nk;
  m.kind = MaskKind::padding;
  m.allowed.assign(static_cast<size_t>(nq * nk), 0);
  for (int64_t i = 0; i < nq; ++i)
    for (int64_t j = 0; j < nk; ++j) m.set(i, j, !key_is_pad[static_cast<size_t>(j)]);
  return m;
}

AttentionMask combine_masks(const AttentionMask& a, const AttentionMask& b) {
  if (a.rows_q != b.rows_q || a.rows_k != b.rows_k) {
    throw dim_error("combine_masks: shape mismatch");
  }
  AttentionMask m = a;
  for (size_t i = 0; i < m.allowed.size(); ++i) m.allowed[i] = a.allowed[i] & b.allowed[i];
  const bool has_causal = a.kind == MaskKind::causal || b.kind == MaskKind::causal ||
                          a.kind == MaskKind::causal_padding ||
                          b.kind == MaskKind::causal_padding;
  const bool has_pad = a.kind == MaskKind::padding || b.kind == MaskKind::padding ||
                       a.kind == MaskKind::causal_padding || b.kind == MaskKind::causal_padding;
  m.kind = has_causal && has_pad ? MaskKind::causal_padding
           : has_causal          ? MaskKind::causal
           : has_pad             ? MaskKind::padding
                                 : MaskKind::none;
  return m;
}

SdpResult sdp_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const AttentionMask* mask) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw dim_error("sdp_attention: q/k/v must be matrices");
  }
  if (q.shape[1] != k.shape[1]) {
    throw dim_error("sdp_attention: q depth " + q.shape_str() + " vs k " + k.shape_str());
  }
  if (k.shape[0] != v.shape[0]) {
    throw dim_error("sdp_attention: k rows " + k.shape_str() + " vs v " + v.shape_str());
  }
  const int64_t nq = q.shape[0], nk = k.shape[0];
  if (mask) {
    if (mask->rows_q != nq || mask->rows_k != nk) {
      throw dim_error("sdp_attention: mask is " + std::to_string(mask->rows_q) + "x" +
                      std::to_string(mask->rows_k) + ", expected " + std::to_string(nq) + "x" +
                      std::to_string(nk));
    }
    for (int64_t i = 0; i < nq; ++i) {
      bool any = false;
      for (int64_t j = 0; j < nk && !any; ++j) any = mask->at(i, j);
      if (!any) {
        throw contract_error("sdp_attention: query row " + std::to_string(i) +
                             " has every key masked");
      }
    }
  }

  // scores = q k^T / sqrt(d_k), built from autodiff ops so gradients flow.
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.shape[1]));
  Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
  if (mask) {
    Tensor bias = Tensor::zeros({nq, nk});
    for (int64_t i = 0; i < nq; ++i)
      for (int64_t j = 0; j < nk; ++j)
        if (!mask->at(i, j)) bias.at(i, j) = kMaskSentinel;
    scores = add(scores, bias);
  }
  Tensor weights = softmax(scores, 1);
  SdpResult res;
  res.out = matmul(weights, v);
  res.weights = weights;
  return res;
}

MultiHeadResult multi_head(const Tensor& x_q, const Tensor& x_kv, const MultiHeadWeights& w,
                           const AttentionMask* mask, bool capture) {
  const int64_t d = w.d_model();
  if (x_q.shape[1] != d || x_kv.shape[1] != d) {
    throw dim_error("multi_head: inputs " + x_q.shape_str() + "/" + x_kv.shape_str() +
                    " do not match d_model " + std::to_string(d));
  }
  if (d % w.h != 0) throw config_error("multi_head: d_model not divisible by head count");
  const int64_t dk = w.d_k();

  Tensor q = matmul(x_q, w.wq);
  Tensor k = matmul(x_kv, w.wk);
  Tensor v = matmul(x_kv, w.wv);

  MultiHeadResult res;
  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<size_t>(w.h));
  for (int hi = 0; hi < w.h; ++hi) {
    const int64_t c0 = hi * dk, c1 = (hi + 1) * dk;
    SdpResult head =
        sdp_attention(slice_cols(q, c0, c1), slice_cols(k, c0, c1), slice_cols(v, c0, c1), mask);
    head_outs.push_back(head.out);
    if (capture) res.head_weights.push_back(head.weights.detach());
  }
  res.out = matmul(concat_cols(head_outs), w.wo);
  return res;
}

}  // namespace memt
