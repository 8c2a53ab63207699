#include "memt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace memt {

namespace {

thread_local bool g_grad_enabled = true;

int64_t product(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

bool want_grad(const Tensor& t) { return grad_enabled() && t.requires_grad; }

void ensure_grad_buffer(Tensor& t) {
  if (t.requires_grad && !t.grad) {
    t.grad = std::make_shared<std::vector<double>>(static_cast<size_t>(t.numel()), 0.0);
  }
}

Tensor make_out(std::vector<int64_t> shape, bool requires_grad) {
  Tensor out = Tensor::zeros(std::move(shape), requires_grad);
  return out;
}

void attach(Tensor& out, std::vector<Tensor> parents, std::function<void(const Tensor&)> fn) {
  if (!out.requires_grad) return;
  out.node = std::make_shared<TensorNode>();
  out.node->parents = std::move(parents);
  out.node->backward = std::move(fn);
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<double>>(static_cast<size_t>(product(t.shape)), 0.0);
  t.requires_grad = requires_grad && grad_enabled();
  ensure_grad_buffer(t);
  return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data->begin(), t.data->end(), value);
  return t;
}

Tensor Tensor::from_values(std::vector<int64_t> shape, std::vector<double> values,
                           bool requires_grad) {
  if (product(shape) != static_cast<int64_t>(values.size())) {
    throw dim_error("from_values: " + std::to_string(values.size()) +
                    " values do not fill shape");
  }
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<double>>(std::move(values));
  t.requires_grad = requires_grad && grad_enabled();
  ensure_grad_buffer(t);
  return t;
}

int64_t Tensor::numel() const { return product(shape); }

double Tensor::scalar() const {
  if (numel() != 1) throw contract_error("scalar() on tensor of shape " + shape_str());
  return (*data)[0];
}

void Tensor::zero_grad() {
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

Tensor Tensor::detach() const {
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<double>>(*data);
  return t;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw dim_error("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor out = make_out(a.shape, want_grad(a) || want_grad(b));
  const size_t n = a.data->size();
  for (size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  attach(out, {a, b}, [](const Tensor& o) {
    const Tensor& pa = o.node->parents[0];
    const Tensor& pb = o.node->parents[1];
    const size_t n2 = o.grad->size();
    if (pa.requires_grad)
      for (size_t i = 0; i < n2; ++i) (*pa.grad)[i] += (*o.grad)[i];
    if (pb.requires_grad)
      for (size_t i = 0; i < n2; ++i) (*pb.grad)[i] += (*o.grad)[i];
  });
  return out;
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (a.rank() != 2 || row.rank() != 1 || a.shape[1] != row.shape[0]) {
    throw dim_error("add_row: " + a.shape_str() + " vs " + row.shape_str());
  }
  Tensor out = make_out(a.shape, want_grad(a) || want_grad(row));
  const int64_t rows = a.shape[0], cols = a.shape[1];
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c)
      (*out.data)[static_cast<size_t>(r * cols + c)] =
          a.at(r, c) + (*row.data)[static_cast<size_t>(c)];
  attach(out, {a, row}, [rows, cols](const Tensor& o) {
    const Tensor& pa = o.node->parents[0];
    const Tensor& pr = o.node->parents[1];
    if (pa.requires_grad)
      for (size_t i = 0; i < o.grad->size(); ++i) (*pa.grad)[i] += (*o.grad)[i];
    if (pr.requires_grad)
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c)
          (*pr.grad)[static_cast<size_t>(c)] += (*o.grad)[static_cast<size_t>(r * cols + c)];
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw dim_error("mul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor out = make_out(a.shape, want_grad(a) || want_grad(b));
  const size_t n = a.data->size();
  for (size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  attach(out, {a, b}, [](const Tensor& o) {
    const Tensor& pa = o.node->parents[0];
    const Tensor& pb = o.node->parents[1];
    const size_t n2 = o.grad->size();
    if (pa.requires_grad)
      for (size_t i = 0; i < n2; ++i) (*pa.grad)[i] += (*o.grad)[i] * (*pb.data)[i];
    if (pb.requires_grad)
      for (size_t i = 0; i < n2; ++i) (*pb.grad)[i] += (*o.grad)[i] * (*pa.data)[i];
  });
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = make_out(a.shape, want_grad(a));
  const size_t n = a.data->size();
  for (size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * s;
  attach(out, {a}, [s](const Tensor& o) {
    const Tensor& pa = o.node->parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < o.grad->size(); ++i) (*pa.grad)[i] += (*o.grad)[i] * s;
  });
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = make_out(a.shape, want_grad(a));
  const size_t n = a.data->size();
  for (size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] > 0.0 ? (*a.data)[i] : 0.0;
  attach(out, {a}, [](const Tensor& o) {
    const Tensor& pa = o.node->parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < o.grad->size(); ++i)
      if ((*pa.data)[i] > 0.0) (*pa.grad)[i] += (*o.grad)[i];
  });
  return out;
}

namespace {

// C[p,r] += A[p,q] * B[q,r], contiguous blocks starting at given offsets.
void gemm_acc(const double* a, const double* b, double* c, int64_t p, int64_t q, int64_t r) {
  for (int64_t i = 0; i < p; ++i) {
    const double* arow = a + i * q;
    double* crow = c + i * r;
    for (int64_t k = 0; k < q; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      const double* brow = b + k * r;
      for (int64_t j = 0; j < r; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[p,q] += G[p,r] * B^T where B is [q,r].
void gemm_bt_acc(const double* g, const double* b, double* c, int64_t p, int64_t q, int64_t r) {
  for (int64_t i = 0; i < p; ++i) {
    const double* grow = g + i * r;
    double* crow = c + i * q;
    for (int64_t k = 0; k < q; ++k) {
      const double* brow = b + k * r;
      double acc = 0.0;
      for (int64_t j = 0; j < r; ++j) acc += grow[j] * brow[j];
      crow[k] += acc;
    }
  }
}

// C[q,r] += A^T * G where A is [p,q], G is [p,r].
void gemm_at_acc(const double* a, const double* g, double* c, int64_t p, int64_t q, int64_t r) {
  for (int64_t i = 0; i < p; ++i) {
    const double* arow = a + i * q;
    const double* grow = g + i * r;
    for (int64_t k = 0; k < q; ++k) {
      const double av = arow[k];
      if (av == 0.0) continue;
      double* crow = c + k * r;
      for (int64_t j = 0; j < r; ++j) crow[j] += av * grow[j];
    }
  }
}

struct MatmulDims {
  int64_t batch, p, q, r;
  bool a_batched, b_batched;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2 || a.rank() > 3 || b.rank() > 3) {
    throw dim_error("matmul: ranks " + a.shape_str() + " x " + b.shape_str());
  }
  MatmulDims d;
  d.a_batched = a.rank() == 3;
  d.b_batched = b.rank() == 3;
  d.p = a.shape[d.a_batched ? 1 : 0];
  d.q = a.shape[d.a_batched ? 2 : 1];
  const int64_t bq = b.shape[d.b_batched ? 1 : 0];
  d.r = b.shape[d.b_batched ? 2 : 1];
  if (d.q != bq) {
    throw dim_error("matmul: inner dimensions disagree, " + a.shape_str() + " x " +
                    b.shape_str());
  }
  if (d.a_batched && d.b_batched && a.shape[0] != b.shape[0]) {
    throw dim_error("matmul: batch dimensions disagree, " + a.shape_str() + " x " +
                    b.shape_str());
  }
  d.batch = d.a_batched ? a.shape[0] : (d.b_batched ? b.shape[0] : 1);
  return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatmulDims d = matmul_dims(a, b);
  std::vector<int64_t> out_shape =
      (d.a_batched || d.b_batched) ? std::vector<int64_t>{d.batch, d.p, d.r}
                                   : std::vector<int64_t>{d.p, d.r};
  Tensor out = make_out(out_shape, want_grad(a) || want_grad(b));
  for (int64_t bi = 0; bi < d.batch; ++bi) {
    const double* ap = a.data->data() + (d.a_batched ? bi * d.p * d.q : 0);
    const double* bp = b.data->data() + (d.b_batched ? bi * d.q * d.r : 0);
    gemm_acc(ap, bp, out.data->data() + bi * d.p * d.r, d.p, d.q, d.r);
  }
  attach(out, {a, b}, [d](const Tensor& o) {
    const Tensor& pa = o.node->parents[0];
    const Tensor& pb = o.node->parents[1];
    for (int64_t bi = 0; bi < d.batch; ++bi) {
      const double* g = o.grad->data() + bi * d.p * d.r;
      if (pa.requires_grad) {
        const double* bp = pb.data->data() + (d.b_batched ? bi * d.q * d.r : 0);
        double* ga = pa.grad->data() + (d.a_batched ? bi * d.p * d.q : 0);
        gemm_bt_acc(g, bp, ga, d.p, d.q, d.r);
      }
      if (pb.requires_grad) {
        const double* ap = pa.data->data() + (d.a_batched ? bi * d.p * d.q : 0);
        double* gb = pb.grad->data() + (d.b_batched ? bi * d.q * d.r : 0);
        gemm_at_acc(ap, g, gb, d.p, d.q, d.r);
      }
    }
  });
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis < 0) axis += x.rank();
  if (axis < 0 || axis >= x.rank()) throw dim_error("softmax: axis out of range");
  const int64_t axis_len = x.shape[static_cast<size_t>(axis)];
  int64_t inner = 1;
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.shape[static_cast<size_t>(i)];
  const int64_t outer = x.numel() / (axis_len * inner);

  Tensor out = make_out(x.shape, want_grad(x));
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      const int64_t base = o * axis_len * inner + in;
      double mx = -1e300;
      for (int64_t k = 0; k < axis_len; ++k) mx = std::max(mx, (*x.data)[base + k * inner]);
      double total = 0.0;
      for (int64_t k = 0; k < axis_len; ++k) {
        const double e = std::exp((*x.data)[base + k * inner] - mx);
        (*out.data)[base + k * inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (int64_t k = 0; k < axis_len; ++k) (*out.data)[base + k * inner] *= inv;
    }
  }
  attach(out, {x}, [axis_len, inner, outer](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    if (!px.requires_grad) return;
    for (int64_t ot = 0; ot < outer; ++ot) {
      for (int64_t in = 0; in < inner; ++in) {
        const int64_t base = ot * axis_len * inner + in;
        double dot = 0.0;
        for (int64_t k = 0; k < axis_len; ++k)
          dot += (*o.grad)[base + k * inner] * (*o.data)[base + k * inner];
        for (int64_t k = 0; k < axis_len; ++k) {
          const double s = (*o.data)[base + k * inner];
          (*px.grad)[base + k * inner] += s * ((*o.grad)[base + k * inner] - dot);
        }
      }
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (eps <= 0.0) throw config_error("layer_norm: eps must be positive");
  const int64_t d = x.shape.back();
  if (gain.numel() != d || bias.numel() != d) {
    throw dim_error("layer_norm: gain/bias length != last dim of " + x.shape_str());
  }
  const int64_t rows = x.numel() / d;
  Tensor out = make_out(x.shape, want_grad(x) || want_grad(gain) || want_grad(bias));
  // Cached per-row statistics for the backward pass.
  auto mean = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data->data() + r * d;
    double m = 0.0;
    for (int64_t c = 0; c < d; ++c) m += xr[c];
    m /= static_cast<double>(d);
    double v = 0.0;
    for (int64_t c = 0; c < d; ++c) v += (xr[c] - m) * (xr[c] - m);
    v /= static_cast<double>(d);  // biased estimator
    const double is = 1.0 / std::sqrt(v + eps);
    (*mean)[static_cast<size_t>(r)] = m;
    (*inv_std)[static_cast<size_t>(r)] = is;
    double* orow = out.data->data() + r * d;
    for (int64_t c = 0; c < d; ++c)
      orow[c] = (xr[c] - m) * is * (*gain.data)[static_cast<size_t>(c)] +
                (*bias.data)[static_cast<size_t>(c)];
  }
  attach(out, {x, gain, bias}, [d, rows, mean, inv_std](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    const Tensor& pg = o.node->parents[1];
    const Tensor& pb = o.node->parents[2];
    for (int64_t r = 0; r < rows; ++r) {
      const double m = (*mean)[static_cast<size_t>(r)];
      const double is = (*inv_std)[static_cast<size_t>(r)];
      const double* xr = px.data->data() + r * d;
      const double* go = o.grad->data() + r * d;
      if (pg.requires_grad || pb.requires_grad) {
        for (int64_t c = 0; c < d; ++c) {
          if (pg.requires_grad)
            (*pg.grad)[static_cast<size_t>(c)] += go[c] * (xr[c] - m) * is;
          if (pb.requires_grad) (*pb.grad)[static_cast<size_t>(c)] += go[c];
        }
      }
      if (px.requires_grad) {
        // dL/dx through the normalized value, mean and variance.
        double sum_gy = 0.0, sum_gy_xhat = 0.0;
        for (int64_t c = 0; c < d; ++c) {
          const double gy = go[c] * (*pg.data)[static_cast<size_t>(c)];
          const double xhat = (xr[c] - m) * is;
          sum_gy += gy;
          sum_gy_xhat += gy * xhat;
        }
        const double inv_d = 1.0 / static_cast<double>(d);
        double* gx = px.grad->data() + r * d;
        for (int64_t c = 0; c < d; ++c) {
          const double gy = go[c] * (*pg.data)[static_cast<size_t>(c)];
          const double xhat = (xr[c] - m) * is;
          gx[c] += is * (gy - inv_d * sum_gy - inv_d * xhat * sum_gy_xhat);
        }
      }
    }
  });
  return out;
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw config_error("dropout: p must be in [0,1)");
  if (!training || p == 0.0) {
    // Eval path and the degenerate p both leave x untouched; still record an
    // identity node so fresh grad buffers do not alias the input's.
    Tensor out = make_out(x.shape, want_grad(x));
    *out.data = *x.data;
    attach(out, {x}, [](const Tensor& o) {
      const Tensor& px = o.node->parents[0];
      if (!px.requires_grad) return;
      for (size_t i = 0; i < o.grad->size(); ++i) (*px.grad)[i] += (*o.grad)[i];
    });
    return out;
  }
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.data->size());
  for (size_t i = 0; i < mask->size(); ++i)
    (*mask)[i] = (rng.uniform() < p) ? 0.0 : keep_scale;
  Tensor out = make_out(x.shape, want_grad(x));
  for (size_t i = 0; i < x.data->size(); ++i) (*out.data)[i] = (*x.data)[i] * (*mask)[i];
  attach(out, {x}, [mask](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    if (!px.requires_grad) return;
    for (size_t i = 0; i < o.grad->size(); ++i) (*px.grad)[i] += (*o.grad)[i] * (*mask)[i];
  });
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_index) {
  if (logits.rank() != 2) throw dim_error("cross_entropy: logits must be [n,V]");
  const int64_t n = logits.shape[0], v = logits.shape[1];
  if (static_cast<int64_t>(targets.size()) != n) {
    throw dim_error("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                    std::to_string(n) + " rows");
  }
  int64_t counted = 0;
  for (int t : targets) {
    if (t == ignore_index) continue;
    if (t < 0 || t >= v) {
      throw index_error("cross_entropy: target id " + std::to_string(t) + " outside [0," +
                        std::to_string(v) + ")");
    }
    ++counted;
  }
  if (counted == 0) throw contract_error("cross_entropy: all positions ignored");

  // log-sum-exp per row with max subtraction; cache softmax for backward.
  auto probs = std::make_shared<std::vector<double>>(logits.data->size());
  double loss = 0.0;
  for (int64_t r = 0; r < n; ++r) {
    const double* row = logits.data->data() + r * v;
    double mx = row[0];
    for (int64_t c = 1; c < v; ++c) mx = std::max(mx, row[c]);
    double total = 0.0;
    for (int64_t c = 0; c < v; ++c) {
      const double e = std::exp(row[c] - mx);
      (*probs)[static_cast<size_t>(r * v + c)] = e;
      total += e;
    }
    const double inv = 1.0 / total;
    for (int64_t c = 0; c < v; ++c) (*probs)[static_cast<size_t>(r * v + c)] *= inv;
    if (targets[static_cast<size_t>(r)] != ignore_index) {
      loss -= std::log((*probs)[static_cast<size_t>(r * v + targets[static_cast<size_t>(r)])]);
    }
  }
  loss /= static_cast<double>(counted);

  Tensor out = Tensor::from_values({1}, {loss}, want_grad(logits));
  auto tgts = std::make_shared<std::vector<int>>(targets);
  attach(out, {logits}, [probs, tgts, ignore_index, n, v, counted](const Tensor& o) {
    const Tensor& pl = o.node->parents[0];
    if (!pl.requires_grad) return;
    const double g = (*o.grad)[0] / static_cast<double>(counted);
    for (int64_t r = 0; r < n; ++r) {
      const int t = (*tgts)[static_cast<size_t>(r)];
      if (t == ignore_index) continue;
      for (int64_t c = 0; c < v; ++c) {
        double p = (*probs)[static_cast<size_t>(r * v + c)];
        if (c == t) p -= 1.0;
        (*pl.grad)[static_cast<size_t>(r * v + c)] += g * p;
      }
    }
  });
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw dim_error("transpose: rank != 2");
  const int64_t rows = x.shape[0], cols = x.shape[1];
  Tensor out = make_out({cols, rows}, want_grad(x));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c)
      (*out.data)[static_cast<size_t>(c * rows + r)] = (*x.data)[static_cast<size_t>(r * cols + c)];
  attach(out, {x}, [rows, cols](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    if (!px.requires_grad) return;
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c)
        (*px.grad)[static_cast<size_t>(r * cols + c)] +=
            (*o.grad)[static_cast<size_t>(c * rows + r)];
  });
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw contract_error("concat_rows: no parts");
  int64_t cols = -1, rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rank() != 2) throw dim_error("concat_rows: rank != 2");
    if (p.shape[0] == 0) continue;
    if (cols < 0) cols = p.shape[1];
    if (p.shape[1] != cols) throw dim_error("concat_rows: column mismatch");
    rows += p.shape[0];
    rg = rg || want_grad(p);
  }
  if (cols < 0) cols = parts[0].shape[1];
  Tensor out = make_out({rows, cols}, rg);
  int64_t r0 = 0;
  for (const auto& p : parts) {
    std::copy(p.data->begin(), p.data->end(), out.data->begin() + r0 * cols);
    r0 += p.shape[0];
  }
  attach(out, parts, [cols](const Tensor& o) {
    int64_t r = 0;
    for (const auto& p : o.node->parents) {
      const int64_t sz = p.numel();
      if (p.requires_grad)
        for (int64_t i = 0; i < sz; ++i)
          (*p.grad)[static_cast<size_t>(i)] += (*o.grad)[static_cast<size_t>(r * cols + i)];
      r += p.shape[0];
    }
  });
  return out;
}

Tensor slice_rows(const Tensor& x, int64_t r0, int64_t r1) {
  if (x.rank() != 2 || r0 < 0 || r1 < r0 || r1 > x.shape[0]) {
    throw dim_error("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) +
                    ") of " + x.shape_str());
  }
  const int64_t cols = x.shape[1];
  Tensor out = make_out({r1 - r0, cols}, want_grad(x));
  std::copy(x.data->begin() + r0 * cols, x.data->begin() + r1 * cols, out.data->begin());
  attach(out, {x}, [r0, cols](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    if (!px.requires_grad) return;
    for (size_t i = 0; i < o.grad->size(); ++i)
      (*px.grad)[static_cast<size_t>(r0 * cols) + i] += (*o.grad)[i];
  });
  return out;
}

Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1) {
  if (x.rank() != 2 || c0 < 0 || c1 < c0 || c1 > x.shape[1]) {
    throw dim_error("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                    ") of " + x.shape_str());
  }
  const int64_t rows = x.shape[0], cols = x.shape[1], w = c1 - c0;
  Tensor out = make_out({rows, w}, want_grad(x));
  for (int64_t r = 0; r < rows; ++r)
    std::copy(x.data->begin() + r * cols + c0, x.data->begin() + r * cols + c1,
              out.data->begin() + r * w);
  attach(out, {x}, [c0, cols, w](const Tensor& o) {
    const Tensor& px = o.node->parents[0];
    if (!px.requires_grad) return;
    const int64_t rows2 = o.shape[0];
    for (int64_t r = 0; r < rows2; ++r)
      for (int64_t c = 0; c < w; ++c)
        (*px.grad)[static_cast<size_t>(r * cols + c0 + c)] +=
            (*o.grad)[static_cast<size_t>(r * w + c)];
  });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw contract_error("concat_cols: no parts");
  const int64_t rows = parts[0].shape[0];
  int64_t cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.shape[0] != rows) throw dim_error("concat_cols: row mismatch");
    cols += p.shape[1];
    rg = rg || want_grad(p);
  }
  Tensor out = make_out({rows, cols}, rg);
  int64_t c0 = 0;
  for (const auto& p : parts) {
    const int64_t w = p.shape[1];
    for (int64_t r = 0; r < rows; ++r)
      std::copy(p.data->begin() + r * w, p.data->begin() + (r + 1) * w,
                out.data->begin() + r * cols + c0);
    c0 += w;
  }
  attach(out, parts, [rows, cols](const Tensor& o) {
    int64_t c = 0;
    for (const auto& p : o.node->parents) {
      const int64_t w = p.shape[1];
      if (p.requires_grad)
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < w; ++j)
            (*p.grad)[static_cast<size_t>(r * w + j)] +=
                (*o.grad)[static_cast<size_t>(r * cols + c + j)];
      c += w;
    }
  });
  return out;
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw dim_error("embedding: table must be [V,d]");
  const int64_t v = table.shape[0], d = table.shape[1];
  for (int id : ids) {
    if (id < 0 || id >= v)
      throw index_error("embedding: id " + std::to_string(id) + " outside [0," +
                        std::to_string(v) + ")");
  }
  const int64_t n = static_cast<int64_t>(ids.size());
  Tensor out = make_out({n, d}, want_grad(table));
  for (int64_t r = 0; r < n; ++r)
    std::copy(table.data->begin() + ids[static_cast<size_t>(r)] * d,
              table.data->begin() + (ids[static_cast<size_t>(r)] + 1) * d,
              out.data->begin() + r * d);
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  attach(out, {table}, [ids_copy, d](const Tensor& o) {
    const Tensor& pt = o.node->parents[0];
    if (!pt.requires_grad) return;
    for (size_t r = 0; r < ids_copy->size(); ++r)
      for (int64_t c = 0; c < d; ++c)
        (*pt.grad)[static_cast<size_t>((*ids_copy)[r] * d + c)] +=
            (*o.grad)[r * static_cast<size_t>(d) + static_cast<size_t>(c)];
  });
  return out;
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : *a.data) total += v;
  Tensor out = Tensor::from_values({1}, {total}, want_grad(a));
  attach(out, {a}, [](const Tensor& o) {
    const Tensor& pa = o.node->parents[0];
    if (!pa.requires_grad) return;
    const double g = (*o.grad)[0];
    for (size_t i = 0; i < pa.grad->size(); ++i) (*pa.grad)[i] += g;
  });
  return out;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw contract_error("backward: loss must be scalar, got " + loss.shape_str());
  }
  if (!loss.requires_grad || !loss.grad) return;
  // Iterative post-order DFS; graph depth grows with batch size, so no
  // recursion here.
  std::unordered_set<TensorNode*> seen;
  std::vector<Tensor> order;
  std::vector<std::pair<Tensor, size_t>> stack;
  if (loss.node && !seen.count(loss.node.get())) {
    seen.insert(loss.node.get());
    stack.emplace_back(loss, 0);
  }
  while (!stack.empty()) {
    auto& [t, next_child] = stack.back();
    if (next_child < t.node->parents.size()) {
      const Tensor& p = t.node->parents[next_child++];
      if (p.node && !seen.count(p.node.get())) {
        seen.insert(p.node.get());
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(t);
      stack.pop_back();
    }
  }
  (*loss.grad)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if (it->node->backward) it->node->backward(*it);
}

bool all_finite(const Tensor& t) {
  for (double v : *t.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace memt
