#include "unimp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "unimp/errors.hpp"

namespace unimp {
namespace {

using Node = Tensor::Node;
using BackwardFn = std::function<void(Node&)>;

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> parents,
                   BackwardFn fn) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  bool any = false;
  for (const Tensor& p : parents) any = any || p.requires_grad();
  if (any) {
    Node& node = out.node();
    node.requires_grad = true;
    for (const Tensor& p : parents) node.parents.push_back(p.impl());
    node.backward_fn = std::move(fn);
  }
  return out;
}

// Gradient buffer of parent k, or nullptr when that parent does not need one.
std::vector<double>* grad_of(Node& out, std::size_t k) {
  Node& p = *out.parents[k];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()) + " differ");
  }
}

std::size_t head_width(const Tensor& x, std::size_t heads, const char* op) {
  require_2d(x, op);
  if (heads == 0 || x.cols() % heads != 0) {
    throw ShapeError(std::string(op) + ": " + std::to_string(x.cols()) + " columns do not split into " +
                     std::to_string(heads) + " heads");
  }
  return x.cols() / heads;
}

}  // namespace

CsrMatrix CsrMatrix::identity(std::size_t n) {
  CsrMatrix m;
  m.rows = m.cols = n;
  m.offsets.resize(n + 1);
  m.indices.resize(n);
  m.values.assign(n, 1.0);
  for (std::size_t i = 0; i <= n; ++i) m.offsets[i] = i;
  for (std::size_t i = 0; i < n; ++i) m.indices[i] = i;
  return m;
}

Matrix CsrMatrix::to_dense() const {
  Matrix d(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t e = offsets[i]; e < offsets[i + 1]; ++e) d(i, indices[e]) += values[e];
  return d;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions disagree for " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ad[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bd.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += aip * brow[j];
    }
  }
  return make_result({n, m}, std::move(out), {a, b}, [n, k, m](Node& self) {
    const auto& g = self.grad;
    const auto& ad = self.parents[0]->data;
    const auto& bd = self.parents[1]->data;
    if (auto* ga = grad_of(self, 0)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * bd[p * m + j];
          (*ga)[i * k + p] += acc;
        }
    }
    if (auto* gb = grad_of(self, 1)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = ad[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) (*gb)[p * m + j] += aip * g[i * m + j];
        }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      if (auto* g = grad_of(self, k))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = grad_of(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& ad = self.parents[0]->data;
    const auto& bd = self.parents[1]->data;
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bd[i];
    if (auto* g = grad_of(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * ad[i];
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  return make_result(x.shape(), std::move(out), {x}, [factor](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_2d(x, "add_bias");
  const std::size_t n = x.rows(), d = x.cols();
  if (bias.numel() != d) {
    throw ShapeError("add_bias: bias " + shape_to_string(bias.shape()) + " does not match " +
                     shape_to_string(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += bias.data()[j];
  return make_result(x.shape(), std::move(out), {x, bias}, [n, d](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = grad_of(self, 1))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) (*g)[j] += self.grad[i * d + j];
  });
}

Tensor mul_col(const Tensor& x, const Tensor& s) {
  require_2d(x, "mul_col");
  const std::size_t n = x.rows(), d = x.cols();
  if (s.numel() != n) {
    throw ShapeError("mul_col: scale " + shape_to_string(s.shape()) + " does not match " +
                     shape_to_string(x.shape()));
  }
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.data()[i * d + j] * s.data()[i];
  return make_result(x.shape(), std::move(out), {x, s}, [n, d](Node& self) {
    const auto& xd = self.parents[0]->data;
    const auto& sd = self.parents[1]->data;
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) (*g)[i * d + j] += self.grad[i * d + j] * sd[i];
    if (auto* g = grad_of(self, 1))
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += self.grad[i * d + j] * xd[i * d + j];
        (*g)[i] += acc;
      }
  });
}

Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0); }

Tensor leaky_relu(const Tensor& x, double slope) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out[i] = v > 0.0 ? v : slope * v;
  }
  return make_result(x.shape(), std::move(out), {x}, [slope](Node& self) {
    const auto& xd = self.parents[0]->data;
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * (xd[i] > 0.0 ? 1.0 : slope);
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return make_result(x.shape(), out, {x}, [y = out](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * y[i] * (1.0 - y[i]);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.ndim() == 0 ? 1 : x.shape().back();
  if (x.ndim() == 0 || d == 0) throw ShapeError("layer_norm: last dimension must be at least 1");
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeError("layer_norm: gain/bias length must be " + std::to_string(d));
  }
  const std::size_t n = x.numel() / d;
  std::vector<double> xhat(n * d), inv_std(n), out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data().data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mean) * inv_std[i];
      out[i * d + j] = gain.data()[j] * xhat[i * d + j] + bias.data()[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias},
                     [n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       const auto& g = self.grad;
                       const auto& gain = self.parents[1]->data;
                       if (auto* gx = grad_of(self, 0)) {
                         for (std::size_t i = 0; i < n; ++i) {
                           double mean_dx = 0.0, mean_dx_xhat = 0.0;
                           for (std::size_t j = 0; j < d; ++j) {
                             const double dxhat = g[i * d + j] * gain[j];
                             mean_dx += dxhat;
                             mean_dx_xhat += dxhat * xhat[i * d + j];
                           }
                           mean_dx /= static_cast<double>(d);
                           mean_dx_xhat /= static_cast<double>(d);
                           for (std::size_t j = 0; j < d; ++j) {
                             const double dxhat = g[i * d + j] * gain[j];
                             (*gx)[i * d + j] += inv_std[i] * (dxhat - mean_dx - xhat[i * d + j] * mean_dx_xhat);
                           }
                         }
                       }
                       if (auto* gg = grad_of(self, 1))
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < d; ++j) (*gg)[j] += g[i * d + j] * xhat[i * d + j];
                       if (auto* gb = grad_of(self, 2))
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < d; ++j) (*gb)[j] += g[i * d + j];
                     });
}

Tensor segment_softmax(const Tensor& scores, std::span<const std::size_t> segment_of, std::size_t num_segments) {
  if (scores.ndim() != 1 && scores.ndim() != 2) {
    throw ShapeError("segment_softmax: expected [E] or [E x C] scores, got " + shape_to_string(scores.shape()));
  }
  const std::size_t num_edges = scores.rows(), heads = scores.cols();
  if (segment_of.size() != num_edges) {
    throw ShapeError("segment_softmax: " + std::to_string(segment_of.size()) + " segment ids for " +
                     std::to_string(num_edges) + " edges");
  }
  constexpr double kLowest = -std::numeric_limits<double>::infinity();
  std::vector<double> seg_max(num_segments * heads, kLowest);
  std::vector<std::size_t> seg_count(num_segments, 0);
  const auto s = scores.data();
  for (std::size_t e = 0; e < num_edges; ++e) {
    const std::size_t seg = segment_of[e];
    if (seg >= num_segments) {
      throw ShapeError("segment_softmax: edge " + std::to_string(e) + " targets segment " + std::to_string(seg) +
                       " of " + std::to_string(num_segments));
    }
    ++seg_count[seg];
    for (std::size_t c = 0; c < heads; ++c)
      seg_max[seg * heads + c] = std::max(seg_max[seg * heads + c], s[e * heads + c]);
  }
  for (std::size_t seg = 0; seg < num_segments; ++seg) {
    if (seg_count[seg] == 0) {
      throw DegenerateNeighborhoodError("segment_softmax: node " + std::to_string(seg) +
                                        " has no incoming edges; add self-loops first");
    }
  }
  std::vector<double> out(num_edges * heads), denom(num_segments * heads, 0.0);
  for (std::size_t e = 0; e < num_edges; ++e)
    for (std::size_t c = 0; c < heads; ++c) {
      const std::size_t k = segment_of[e] * heads + c;
      out[e * heads + c] = std::exp(s[e * heads + c] - seg_max[k]);
      denom[k] += out[e * heads + c];
    }
  for (std::size_t e = 0; e < num_edges; ++e)
    for (std::size_t c = 0; c < heads; ++c) out[e * heads + c] /= denom[segment_of[e] * heads + c];

  std::vector<std::size_t> seg(segment_of.begin(), segment_of.end());
  return make_result(scores.shape(), out, {scores},
                     [y = out, seg = std::move(seg), num_segments, heads](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       const auto& gy = self.grad;
                       std::vector<double> dot(num_segments * heads, 0.0);
                       for (std::size_t e = 0; e < seg.size(); ++e)
                         for (std::size_t c = 0; c < heads; ++c)
                           dot[seg[e] * heads + c] += y[e * heads + c] * gy[e * heads + c];
                       for (std::size_t e = 0; e < seg.size(); ++e)
                         for (std::size_t c = 0; c < heads; ++c) {
                           const std::size_t i = e * heads + c;
                           (*g)[i] += y[i] * (gy[i] - dot[seg[e] * heads + c]);
                         }
                     });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  require_2d(x, "gather_rows");
  const std::size_t n = x.rows(), d = x.cols(), m = index.size();
  std::vector<double> out(m * d);
  for (std::size_t e = 0; e < m; ++e) {
    if (index[e] >= n) throw ShapeError("gather_rows: index " + std::to_string(index[e]) + " out of range");
    std::copy_n(x.data().data() + index[e] * d, d, out.data() + e * d);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result({m, d}, std::move(out), {x}, [idx = std::move(idx), d](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t e = 0; e < idx.size(); ++e)
        for (std::size_t j = 0; j < d; ++j) (*g)[idx[e] * d + j] += self.grad[e * d + j];
  });
}

Tensor scatter_add_rows(const Tensor& x, std::span<const std::size_t> index, std::size_t num_rows) {
  require_2d(x, "scatter_add_rows");
  const std::size_t m = x.rows(), d = x.cols();
  if (index.size() != m) throw ShapeError("scatter_add_rows: index length does not match row count");
  std::vector<double> out(num_rows * d, 0.0);
  for (std::size_t e = 0; e < m; ++e) {
    if (index[e] >= num_rows) throw ShapeError("scatter_add_rows: index " + std::to_string(index[e]) + " out of range");
    for (std::size_t j = 0; j < d; ++j) out[index[e] * d + j] += x.data()[e * d + j];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result({num_rows, d}, std::move(out), {x}, [idx = std::move(idx), d](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t e = 0; e < idx.size(); ++e)
        for (std::size_t j = 0; j < d; ++j) (*g)[e * d + j] += self.grad[idx[e] * d + j];
  });
}

Tensor head_dot(const Tensor& a, const Tensor& b, std::size_t heads) {
  require_same_shape(a, b, "head_dot");
  const std::size_t width = head_width(a, heads, "head_dot");
  const std::size_t n = a.rows(), cols = a.cols();
  std::vector<double> out(n * heads, 0.0);
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < heads; ++c) {
      double acc = 0.0;
      for (std::size_t j = c * width; j < (c + 1) * width; ++j) acc += ad[r * cols + j] * bd[r * cols + j];
      out[r * heads + c] = acc;
    }
  return make_result({n, heads}, std::move(out), {a, b}, [n, heads, width, cols](Node& self) {
    const auto& ad = self.parents[0]->data;
    const auto& bd = self.parents[1]->data;
    auto* ga = grad_of(self, 0);
    auto* gb = grad_of(self, 1);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < heads; ++c) {
        const double g = self.grad[r * heads + c];
        for (std::size_t j = c * width; j < (c + 1) * width; ++j) {
          if (ga) (*ga)[r * cols + j] += g * bd[r * cols + j];
          if (gb) (*gb)[r * cols + j] += g * ad[r * cols + j];
        }
      }
  });
}

Tensor head_scale(const Tensor& x, const Tensor& weights, std::size_t heads) {
  const std::size_t width = head_width(x, heads, "head_scale");
  const std::size_t n = x.rows(), cols = x.cols();
  if (weights.rows() != n || weights.numel() != n * heads) {
    throw ShapeError("head_scale: weights " + shape_to_string(weights.shape()) + " do not match " +
                     shape_to_string(x.shape()) + " with " + std::to_string(heads) + " heads");
  }
  std::vector<double> out(n * cols);
  const auto xd = x.data();
  const auto wd = weights.data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < heads; ++c)
      for (std::size_t j = c * width; j < (c + 1) * width; ++j) out[r * cols + j] = xd[r * cols + j] * wd[r * heads + c];
  return make_result(x.shape(), std::move(out), {x, weights}, [n, heads, width, cols](Node& self) {
    const auto& xd = self.parents[0]->data;
    const auto& wd = self.parents[1]->data;
    auto* gx = grad_of(self, 0);
    auto* gw = grad_of(self, 1);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < heads; ++c) {
        const double w = wd[r * heads + c];
        double acc = 0.0;
        for (std::size_t j = c * width; j < (c + 1) * width; ++j) {
          const double g = self.grad[r * cols + j];
          if (gx) (*gx)[r * cols + j] += g * w;
          acc += g * xd[r * cols + j];
        }
        if (gw) (*gw)[r * heads + c] += acc;
      }
  });
}

Tensor head_mean(const Tensor& x, std::size_t heads) {
  const std::size_t width = head_width(x, heads, "head_mean");
  const std::size_t n = x.rows(), cols = x.cols();
  const double inv = 1.0 / static_cast<double>(heads);
  std::vector<double> out(n * width, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < cols; ++j) out[r * width + j % width] += x.data()[r * cols + j] * inv;
  return make_result({n, width}, std::move(out), {x}, [n, width, cols, inv](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < cols; ++j) (*g)[r * cols + j] += self.grad[r * width + j % width] * inv;
  });
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
  if (parts.size() == 0) throw ShapeError("concat_cols: nothing to concatenate");
  const std::size_t n = parts.begin()->rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != n) throw ShapeError("concat_cols: row counts differ");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t r = 0; r < n; ++r) std::copy_n(p.data().data() + r * w, w, out.data() + r * total + offset);
    offset += w;
  }
  return make_result({n, total}, std::move(out), parts, [n, total, widths = std::move(widths)](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const std::size_t w = widths[k];
      if (auto* g = grad_of(self, k))
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < w; ++j) (*g)[r * w + j] += self.grad[r * total + offset + j];
      offset += w;
    }
  });
}

Tensor spmm(const CsrMatrix& a, const Tensor& x) {
  require_2d(x, "spmm");
  if (a.cols != x.rows()) {
    throw ShapeError("spmm: sparse matrix with " + std::to_string(a.cols) + " columns times " +
                     shape_to_string(x.shape()));
  }
  const std::size_t d = x.cols();
  std::vector<double> out(a.rows * d, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t e = a.offsets[i]; e < a.offsets[i + 1]; ++e) {
      const double w = a.values[e];
      const double* src = x.data().data() + a.indices[e] * d;
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += w * src[j];
    }
  return make_result({a.rows, d}, std::move(out), {x}, [a, d](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t e = a.offsets[i]; e < a.offsets[i + 1]; ++e)
          for (std::size_t j = 0; j < d; ++j) (*g)[a.indices[e] * d + j] += a.values[e] * self.grad[i * d + j];
  });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (!training) return x;
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must lie in [0, 1), got " + std::to_string(p));
  if (p == 0.0) return x;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = unit(rng) < p ? 0.0 : keep_scale;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
  return make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * mask[i];
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_result({}, {acc}, {x}, [](Node& self) {
    if (auto* g = grad_of(self, 0))
      for (double& v : *g) v += self.grad[0];
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> rows,
                             std::span<const std::size_t> targets) {
  require_2d(logits, "softmax_cross_entropy");
  if (rows.size() != targets.size()) throw ShapeError("softmax_cross_entropy: rows/targets length mismatch");
  if (rows.empty()) throw ContractError("softmax_cross_entropy: no rows to average over");
  const std::size_t c = logits.cols();
  const double inv = 1.0 / static_cast<double>(rows.size());
  std::vector<double> probs(rows.size() * c);
  double loss = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (targets[k] >= c) throw ShapeError("softmax_cross_entropy: target class out of range");
    const double* z = logits.data().data() + rows[k] * c;
    const double mx = *std::max_element(z, z + c);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(z[j] - mx);
    for (std::size_t j = 0; j < c; ++j) probs[k * c + j] = std::exp(z[j] - mx) / denom;
    loss += (mx + std::log(denom) - z[targets[k]]) * inv;
  }
  std::vector<std::size_t> r(rows.begin(), rows.end()), t(targets.begin(), targets.end());
  return make_result({}, {loss}, {logits},
                     [probs = std::move(probs), r = std::move(r), t = std::move(t), c, inv](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       const double go = self.grad[0] * inv;
                       for (std::size_t k = 0; k < r.size(); ++k)
                         for (std::size_t j = 0; j < c; ++j)
                           (*g)[r[k] * c + j] += go * (probs[k * c + j] - (j == t[k] ? 1.0 : 0.0));
                     });
}

Tensor binary_cross_entropy_with_logits(const Tensor& logits, const Matrix& targets,
                                        std::span<const std::size_t> rows) {
  require_2d(logits, "binary_cross_entropy_with_logits");
  const std::size_t c = logits.cols();
  if (targets.rows != logits.rows() || targets.cols != c) {
    throw ShapeError("binary_cross_entropy_with_logits: target matrix does not match " +
                     shape_to_string(logits.shape()));
  }
  if (rows.empty()) throw ContractError("binary_cross_entropy_with_logits: no rows to average over");
  const double inv = 1.0 / static_cast<double>(rows.size() * c);
  double loss = 0.0;
  for (std::size_t r : rows)
    for (std::size_t j = 0; j < c; ++j) {
      const double x = logits.data()[r * c + j];
      loss += (std::max(x, 0.0) - x * targets(r, j) + std::log1p(std::exp(-std::abs(x)))) * inv;
    }
  std::vector<std::size_t> rv(rows.begin(), rows.end());
  return make_result({}, {loss}, {logits}, [rv = std::move(rv), targets, c, inv](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    const auto& z = self.parents[0]->data;
    const double go = self.grad[0] * inv;
    for (std::size_t r : rv)
      for (std::size_t j = 0; j < c; ++j) {
        const double x = z[r * c + j];
        const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        (*g)[r * c + j] += go * (s - targets(r, j));
      }
  });
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  std::vector<double> data(fan_in * fan_out);
  for (double& v : data) v = dist(rng);
  return Tensor::from_data({fan_in, fan_out}, std::move(data), true);
}

Tensor zeros_parameter(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    const auto z = logits.row(i);
    const double mx = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (std::size_t j = 0; j < logits.cols; ++j) denom += out(i, j) = std::exp(z[j] - mx);
    for (std::size_t j = 0; j < logits.cols; ++j) out(i, j) /= denom;
  }
  return out;
}

Matrix sigmoid_elementwise(const Matrix& logits) {
  Matrix out = logits;
  for (double& v : out.values) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return out;
}

}  // namespace unimp
