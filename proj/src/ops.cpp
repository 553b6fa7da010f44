// Copyright 2026 The kgjoint Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kgjoint/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace kgjoint::ops {

using detail::Node;

namespace {

Node& parent(Node& self, size_t i) { return *self.parents[i]; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                " vs " + shape_string(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() > 2) throw Error(std::string(op) + ": expected rank <= 2");
}

// c[m x n] += a[m x k] * b[k x n]. Each output accumulates over k in
// increasing order regardless of m, so results for a row do not depend on
// how many other rows are in the batch.
void gemm_nn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * n;
      for (size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
void gemm_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] += s;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      double* cp = c + p * n;
      for (size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

Shape matrix_shape(size_t rows, size_t cols) { return {rows, cols}; }

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.size());
  auto in = a.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return Tensor::make_result(a.shape(), std::move(out), {a}, [deriv](Node& self) {
    Node& x = parent(self, 0);
    for (size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i] * deriv(x.value[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw Error("matmul: inner extents differ " + shape_string(a.shape()) + " x " +
                shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return Tensor::make_result(matrix_shape(m, n), std::move(out), {a, b},
                             [m, k, n](Node& self) {
                               Node& x = parent(self, 0);
                               Node& y = parent(self, 1);
                               if (x.requires_grad) gemm_nt(self.grad.data(), y.value.data(), x.grad.data(), m, n, k);
                               if (y.requires_grad) gemm_tn(x.value.data(), self.grad.data(), y.grad.data(), m, k, n);
                             });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw Error("matmul_nt: inner extents differ " + shape_string(a.shape()) + " x " +
                shape_string(b.shape()) + "^T");
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.values().data(), b.values().data(), out.data(), m, k, n);
  return Tensor::make_result(matrix_shape(m, n), std::move(out), {a, b},
                             [m, k, n](Node& self) {
                               Node& x = parent(self, 0);
                               Node& y = parent(self, 1);
                               if (x.requires_grad) gemm_nn(self.grad.data(), y.value.data(), x.grad.data(), m, n, k);
                               if (y.requires_grad) gemm_tn(self.grad.data(), x.value.data(), y.grad.data(), m, n, k);
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (size_t p = 0; p < 2; ++p) {
      Node& x = parent(self, p);
      if (!x.requires_grad) continue;
      for (size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& x = parent(self, 0);
    Node& y = parent(self, 1);
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (x.requires_grad) x.grad[i] += self.grad[i];
      if (y.requires_grad) y.grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& x = parent(self, 0);
    Node& y = parent(self, 1);
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (x.requires_grad) x.grad[i] += self.grad[i] * y.value[i];
      if (y.requires_grad) y.grad[i] += self.grad[i] * x.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * factor;
  return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    Node& x = parent(self, 0);
    for (size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i] * factor;
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  require_matrix(a, "add_row");
  const size_t m = a.rows(), n = a.cols();
  if (row.size() != n) {
    throw Error("add_row: row of " + std::to_string(row.size()) + " values for " +
                std::to_string(n) + " columns");
  }
  std::vector<double> out(a.size());
  auto in = a.values();
  auto r = row.values();
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < n; ++j) out[i * n + j] = in[i * n + j] + r[j];
  }
  return Tensor::make_result(a.shape(), std::move(out), {a, row}, [m, n](Node& self) {
    Node& x = parent(self, 0);
    Node& y = parent(self, 1);
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = 0; j < n; ++j) {
        const double g = self.grad[i * n + j];
        if (x.requires_grad) x.grad[i * n + j] += g;
        if (y.requires_grad) y.grad[j] += g;
      }
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return Tensor::make_result({}, {s}, {a}, [](Node& self) {
    Node& x = parent(self, 0);
    for (double& g : x.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
      [](double x) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
      });
}

Tensor elu(const Tensor& a, double alpha) {
  return unary(a, [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); },
               [alpha](double x) { return x > 0.0 ? 1.0 : alpha * std::exp(x); });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x) { return x > 0.0 ? 1.0 : slope; });
}

Tensor softmax(const Tensor& x, size_t axis) {
  require_matrix(x, "softmax");
  if (axis >= std::max<size_t>(x.rank(), 1)) {
    throw Error("softmax: axis " + std::to_string(axis) + " out of range for shape " +
                shape_string(x.shape()));
  }
  // Normalize over `count` entries spaced `stride` apart, for `groups` groups.
  const bool over_rows = x.rank() == 2 && axis == 0;
  const size_t rows = x.rows(), cols = x.cols();
  const size_t groups = over_rows ? cols : rows;
  const size_t count = over_rows ? rows : cols;
  const size_t stride = over_rows ? cols : 1;
  const size_t group_step = over_rows ? 1 : cols;
  auto in = x.values();
  std::vector<double> out(x.size());
  for (size_t g = 0; g < groups; ++g) {
    const size_t base = g * group_step;
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < count; ++i) mx = std::max(mx, in[base + i * stride]);
    double total = 0.0;
    for (size_t i = 0; i < count; ++i) {
      out[base + i * stride] = std::exp(in[base + i * stride] - mx);
      total += out[base + i * stride];
    }
    for (size_t i = 0; i < count; ++i) out[base + i * stride] /= total;
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x}, [groups, count, stride, group_step](Node& self) {
        Node& in_node = parent(self, 0);
        for (size_t g = 0; g < groups; ++g) {
          const size_t base = g * group_step;
          double dot = 0.0;
          for (size_t i = 0; i < count; ++i) {
            const size_t at = base + i * stride;
            dot += self.grad[at] * self.value[at];
          }
          for (size_t i = 0; i < count; ++i) {
            const size_t at = base + i * stride;
            in_node.grad[at] += self.value[at] * (self.grad[at] - dot);
          }
        }
      });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_matrix(x, "layer_norm");
  const size_t m = x.rows(), n = x.cols();
  if (gamma.size() != n || beta.size() != n) {
    throw Error("layer_norm: gamma/beta width does not match " + std::to_string(n));
  }
  if (!(eps > 0.0)) throw Error("layer_norm: eps must be positive");
  auto in = x.values();
  auto g = gamma.values();
  auto b = beta.values();
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(m);
  for (size_t i = 0; i < m; ++i) {
    const double* row = in.data() + i * n;
    double mu = 0.0;
    for (size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = g[j] * xhat[i * n + j] + b[j];
    }
  }
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& xin = parent(self, 0);
        Node& gam = parent(self, 1);
        Node& bet = parent(self, 2);
        std::vector<double> dxhat(n);
        for (size_t i = 0; i < m; ++i) {
          const double* dy = self.grad.data() + i * n;
          const double* xh = xhat.data() + i * n;
          double mean_d = 0.0, mean_dx = 0.0;
          for (size_t j = 0; j < n; ++j) {
            if (gam.requires_grad) gam.grad[j] += dy[j] * xh[j];
            if (bet.requires_grad) bet.grad[j] += dy[j];
            dxhat[j] = dy[j] * gam.value[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xh[j];
          }
          if (!xin.requires_grad) continue;
          mean_d /= static_cast<double>(n);
          mean_dx /= static_cast<double>(n);
          for (size_t j = 0; j < n; ++j) {
            xin.grad[i * n + j] += inv_std[i] * (dxhat[j] - mean_d - xh[j] * mean_dx);
          }
        }
      });
}

Tensor cross_entropy(const Tensor& logits, std::span<const size_t> targets) {
  require_matrix(logits, "cross_entropy");
  const size_t m = logits.rows(), c = logits.cols();
  if (targets.size() != m) {
    throw Error("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                std::to_string(m) + " rows");
  }
  auto in = logits.values();
  std::vector<double> probs(logits.size());
  double loss = 0.0;
  for (size_t i = 0; i < m; ++i) {
    if (targets[i] >= c) {
      throw Error("cross_entropy: target " + std::to_string(targets[i]) + " out of range [0, " +
                  std::to_string(c) + ")");
    }
    const double* row = in.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (size_t j = 0; j < c; ++j) total += std::exp(row[j] - mx);
    const double log_z = mx + std::log(total);
    for (size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - log_z);
    loss += log_z - row[targets[i]];
  }
  loss /= static_cast<double>(m);
  std::vector<size_t> tgt(targets.begin(), targets.end());
  return Tensor::make_result({}, {loss}, {logits},
                             [m, c, probs = std::move(probs), tgt = std::move(tgt)](Node& self) {
                               Node& x = parent(self, 0);
                               const double g = self.grad[0] / static_cast<double>(m);
                               for (size_t i = 0; i < m; ++i) {
                                 for (size_t j = 0; j < c; ++j) {
                                   const double onehot = j == tgt[i] ? 1.0 : 0.0;
                                   x.grad[i * c + j] += g * (probs[i * c + j] - onehot);
                                 }
                               }
                             });
}

Tensor cross_entropy(const Tensor& logits, size_t target) {
  const size_t targets[] = {target};
  return cross_entropy(logits.rank() == 2 ? logits : reshape(logits, {1, logits.size()}), targets);
}

Tensor gather_rows(const Tensor& table, std::span<const size_t> ids) {
  require_matrix(table, "gather_rows");
  const size_t n = table.cols(), rows = table.rows();
  if (ids.empty()) throw Error("gather_rows: empty id list");
  std::vector<double> out(ids.size() * n);
  auto in = table.values();
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw Error("gather_rows: row " + std::to_string(ids[i]) + " out of range [0, " +
                  std::to_string(rows) + ")");
    }
    std::copy_n(in.data() + ids[i] * n, n, out.data() + i * n);
  }
  std::vector<size_t> idx(ids.begin(), ids.end());
  return Tensor::make_result(matrix_shape(ids.size(), n), std::move(out), {table},
                             [n, idx = std::move(idx)](Node& self) {
                               Node& t = parent(self, 0);
                               for (size_t i = 0; i < idx.size(); ++i) {
                                 for (size_t j = 0; j < n; ++j) t.grad[idx[i] * n + j] += self.grad[i * n + j];
                               }
                             });
}

Tensor scatter_add_rows(const Tensor& base, const Tensor& rows, std::span<const int64_t> slots) {
  require_matrix(base, "scatter_add_rows");
  const size_t m = base.rows(), n = base.cols();
  if (slots.size() != m) throw Error("scatter_add_rows: one slot per base row required");
  if (rows.cols() != n) throw Error("scatter_add_rows: width mismatch");
  std::vector<double> out(base.values().begin(), base.values().end());
  auto add = rows.values();
  for (size_t i = 0; i < m; ++i) {
    if (slots[i] < 0) continue;
    const auto s = static_cast<size_t>(slots[i]);
    if (s >= rows.rows()) throw Error("scatter_add_rows: slot out of range");
    for (size_t j = 0; j < n; ++j) out[i * n + j] += add[s * n + j];
  }
  std::vector<int64_t> sl(slots.begin(), slots.end());
  return Tensor::make_result(base.shape(), std::move(out), {base, rows},
                             [m, n, sl = std::move(sl)](Node& self) {
                               Node& b = parent(self, 0);
                               Node& r = parent(self, 1);
                               for (size_t i = 0; i < m; ++i) {
                                 for (size_t j = 0; j < n; ++j) {
                                   const double g = self.grad[i * n + j];
                                   if (b.requires_grad) b.grad[i * n + j] += g;
                                   if (r.requires_grad && sl[i] >= 0) r.grad[static_cast<size_t>(sl[i]) * n + j] += g;
                                 }
                               }
                             });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const size_t m = parts[0].rows();
  std::vector<size_t> offsets;
  size_t width = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != m) throw Error("concat_cols: row count mismatch");
    offsets.push_back(width);
    width += p.cols();
  }
  std::vector<double> out(m * width);
  for (size_t p = 0; p < parts.size(); ++p) {
    const size_t w = parts[p].cols();
    auto in = parts[p].values();
    for (size_t i = 0; i < m; ++i) std::copy_n(in.data() + i * w, w, out.data() + i * width + offsets[p]);
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return Tensor::make_result(matrix_shape(m, width), std::move(out), inputs,
                             [m, width, offsets](Node& self) {
                               for (size_t p = 0; p < self.parents.size(); ++p) {
                                 Node& x = parent(self, p);
                                 if (!x.requires_grad) continue;
                                 const size_t w = x.value.size() / m;
                                 for (size_t i = 0; i < m; ++i) {
                                   for (size_t j = 0; j < w; ++j) x.grad[i * w + j] += self.grad[i * width + offsets[p] + j];
                                 }
                               }
                             });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  const size_t n = parts[0].cols();
  std::vector<double> out;
  size_t m = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != n) throw Error("concat_rows: column count mismatch");
    out.insert(out.end(), p.values().begin(), p.values().end());
    m += p.rows();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return Tensor::make_result(matrix_shape(m, n), std::move(out), inputs, [](Node& self) {
    size_t offset = 0;
    for (size_t p = 0; p < self.parents.size(); ++p) {
      Node& x = parent(self, p);
      if (x.requires_grad) {
        for (size_t i = 0; i < x.value.size(); ++i) x.grad[i] += self.grad[offset + i];
      }
      offset += x.value.size();
    }
  });
}

Tensor slice_rows(const Tensor& a, size_t begin, size_t end) {
  require_matrix(a, "slice_rows");
  const size_t n = a.cols();
  if (begin >= end || end > a.rows()) throw Error("slice_rows: bad range");
  std::vector<double> out(a.values().begin() + begin * n, a.values().begin() + end * n);
  return Tensor::make_result(matrix_shape(end - begin, n), std::move(out), {a},
                             [begin, n](Node& self) {
                               Node& x = parent(self, 0);
                               for (size_t i = 0; i < self.grad.size(); ++i) x.grad[begin * n + i] += self.grad[i];
                             });
}

Tensor slice_cols(const Tensor& a, size_t begin, size_t end) {
  require_matrix(a, "slice_cols");
  const size_t m = a.rows(), n = a.cols(), w = end - begin;
  if (begin >= end || end > n) throw Error("slice_cols: bad range");
  std::vector<double> out(m * w);
  auto in = a.values();
  for (size_t i = 0; i < m; ++i) std::copy_n(in.data() + i * n + begin, w, out.data() + i * w);
  return Tensor::make_result(matrix_shape(m, w), std::move(out), {a}, [m, n, w, begin](Node& self) {
    Node& x = parent(self, 0);
    for (size_t i = 0; i < m; ++i) {
      for (size_t j = 0; j < w; ++j) x.grad[i * n + begin + j] += self.grad[i * w + j];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw Error("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return Tensor::make_result(std::move(shape), std::move(out), {a}, [](Node& self) {
    Node& x = parent(self, 0);
    for (size_t i = 0; i < self.grad.size(); ++i) x.grad[i] += self.grad[i];
  });
}

Tensor head_dot(const Tensor& x, const Tensor& w) {
  require_matrix(x, "head_dot");
  const size_t heads = w.rows(), d = w.cols(), m = x.rows();
  if (x.cols() != heads * d) throw Error("head_dot: width is not heads * head_dim");
  std::vector<double> out(m * heads, 0.0);
  auto xv = x.values();
  auto wv = w.values();
  for (size_t i = 0; i < m; ++i) {
    for (size_t k = 0; k < heads; ++k) {
      double s = 0.0;
      for (size_t j = 0; j < d; ++j) s += xv[i * heads * d + k * d + j] * wv[k * d + j];
      out[i * heads + k] = s;
    }
  }
  return Tensor::make_result(matrix_shape(m, heads), std::move(out), {x, w},
                             [m, heads, d](Node& self) {
                               Node& xn = parent(self, 0);
                               Node& wn = parent(self, 1);
                               for (size_t i = 0; i < m; ++i) {
                                 for (size_t k = 0; k < heads; ++k) {
                                   const double g = self.grad[i * heads + k];
                                   for (size_t j = 0; j < d; ++j) {
                                     const size_t xi = i * heads * d + k * d + j;
                                     if (xn.requires_grad) xn.grad[xi] += g * wn.value[k * d + j];
                                     if (wn.requires_grad) wn.grad[k * d + j] += g * xn.value[xi];
                                   }
                                 }
                               }
                             });
}

Tensor segment_softmax(const Tensor& scores, std::span<const size_t> segment, size_t segment_count) {
  require_matrix(scores, "segment_softmax");
  const size_t e = scores.rows(), k = scores.cols();
  if (segment.size() != e) throw Error("segment_softmax: one segment id per row required");
  auto in = scores.values();
  std::vector<double> mx(segment_count * k, -std::numeric_limits<double>::infinity());
  for (size_t i = 0; i < e; ++i) {
    if (segment[i] >= segment_count) throw Error("segment_softmax: segment id out of range");
    for (size_t h = 0; h < k; ++h) mx[segment[i] * k + h] = std::max(mx[segment[i] * k + h], in[i * k + h]);
  }
  std::vector<double> out(e * k);
  std::vector<double> total(segment_count * k, 0.0);
  for (size_t i = 0; i < e; ++i) {
    for (size_t h = 0; h < k; ++h) {
      out[i * k + h] = std::exp(in[i * k + h] - mx[segment[i] * k + h]);
      total[segment[i] * k + h] += out[i * k + h];
    }
  }
  for (size_t i = 0; i < e; ++i) {
    for (size_t h = 0; h < k; ++h) out[i * k + h] /= total[segment[i] * k + h];
  }
  std::vector<size_t> seg(segment.begin(), segment.end());
  return Tensor::make_result(scores.shape(), std::move(out), {scores},
                             [e, k, segment_count, seg = std::move(seg)](Node& self) {
                               Node& x = parent(self, 0);
                               std::vector<double> dot(segment_count * k, 0.0);
                               for (size_t i = 0; i < e; ++i) {
                                 for (size_t h = 0; h < k; ++h) dot[seg[i] * k + h] += self.grad[i * k + h] * self.value[i * k + h];
                               }
                               for (size_t i = 0; i < e; ++i) {
                                 for (size_t h = 0; h < k; ++h) {
                                   x.grad[i * k + h] += self.value[i * k + h] * (self.grad[i * k + h] - dot[seg[i] * k + h]);
                                 }
                               }
                             });
}

Tensor segment_weighted_sum(const Tensor& weights, const Tensor& values,
                            std::span<const size_t> segment, size_t segment_count) {
  require_matrix(weights, "segment_weighted_sum");
  require_matrix(values, "segment_weighted_sum");
  const size_t e = weights.rows(), heads = weights.cols();
  if (values.rows() != e || segment.size() != e) {
    throw Error("segment_weighted_sum: weights, values and segments disagree on edge count");
  }
  const size_t width = values.cols();
  if (width % heads != 0) throw Error("segment_weighted_sum: width not divisible by heads");
  const size_t d = width / heads;
  std::vector<double> out(segment_count * width, 0.0);
  auto w = weights.values();
  auto v = values.values();
  for (size_t i = 0; i < e; ++i) {
    if (segment[i] >= segment_count) throw Error("segment_weighted_sum: segment id out of range");
    double* o = out.data() + segment[i] * width;
    for (size_t h = 0; h < heads; ++h) {
      const double a = w[i * heads + h];
      for (size_t j = 0; j < d; ++j) o[h * d + j] += a * v[i * width + h * d + j];
    }
  }
  std::vector<size_t> seg(segment.begin(), segment.end());
  return Tensor::make_result(matrix_shape(segment_count, width), std::move(out), {weights, values},
                             [e, heads, d, width, seg = std::move(seg)](Node& self) {
                               Node& wn = parent(self, 0);
                               Node& vn = parent(self, 1);
                               for (size_t i = 0; i < e; ++i) {
                                 const double* g = self.grad.data() + seg[i] * width;
                                 for (size_t h = 0; h < heads; ++h) {
                                   const double a = wn.value[i * heads + h];
                                   double dw = 0.0;
                                   for (size_t j = 0; j < d; ++j) {
                                     const size_t vi = i * width + h * d + j;
                                     dw += g[h * d + j] * vn.value[vi];
                                     if (vn.requires_grad) vn.grad[vi] += a * g[h * d + j];
                                   }
                                   if (wn.requires_grad) wn.grad[i * heads + h] += dw;
                                 }
                               }
                             });
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, size_t batch,
                            size_t seq_len, size_t heads, std::span<const uint8_t> key_mask,
                            std::vector<double>* probs_out) {
  require_same_shape(q, k, "multi_head_attention");
  require_same_shape(q, v, "multi_head_attention");
  const size_t width = q.cols();
  if (q.rows() != batch * seq_len) throw Error("multi_head_attention: rows != batch * seq_len");
  if (heads == 0 || width % heads != 0) throw Error("multi_head_attention: heads must divide width");
  if (key_mask.size() != batch * seq_len) throw Error("multi_head_attention: key mask size");
  const size_t d = width / heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  auto qv = q.values();
  auto kv = k.values();
  auto vv = v.values();
  std::vector<double> probs(batch * heads * seq_len * seq_len, 0.0);
  std::vector<double> out(q.size(), 0.0);
  std::vector<uint8_t> mask(key_mask.begin(), key_mask.end());
  for (size_t b = 0; b < batch; ++b) {
    const size_t row0 = b * seq_len;
    for (size_t h = 0; h < heads; ++h) {
      for (size_t i = 0; i < seq_len; ++i) {
        double* p = probs.data() + ((b * heads + h) * seq_len + i) * seq_len;
        const double* qi = qv.data() + (row0 + i) * width + h * d;
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < seq_len; ++j) {
          if (!mask[row0 + j]) continue;
          const double* kj = kv.data() + (row0 + j) * width + h * d;
          double s = 0.0;
          for (size_t t = 0; t < d; ++t) s += qi[t] * kj[t];
          p[j] = s * inv_sqrt_d;
          mx = std::max(mx, p[j]);
        }
        double total = 0.0;
        for (size_t j = 0; j < seq_len; ++j) {
          if (!mask[row0 + j]) continue;
          p[j] = std::exp(p[j] - mx);
          total += p[j];
        }
        double* oi = out.data() + (row0 + i) * width + h * d;
        for (size_t j = 0; j < seq_len; ++j) {
          if (!mask[row0 + j]) continue;
          p[j] /= total;
          const double* vj = vv.data() + (row0 + j) * width + h * d;
          for (size_t t = 0; t < d; ++t) oi[t] += p[j] * vj[t];
        }
      }
    }
  }
  if (probs_out) *probs_out = probs;
  return Tensor::make_result(
      q.shape(), std::move(out), {q, k, v},
      [batch, seq_len, heads, d, width, inv_sqrt_d, probs = std::move(probs),
       mask = std::move(mask)](Node& self) {
        Node& qn = parent(self, 0);
        Node& kn = parent(self, 1);
        Node& vn = parent(self, 2);
        std::vector<double> dp(seq_len);
        for (size_t b = 0; b < batch; ++b) {
          const size_t row0 = b * seq_len;
          for (size_t h = 0; h < heads; ++h) {
            for (size_t i = 0; i < seq_len; ++i) {
              const double* p = probs.data() + ((b * heads + h) * seq_len + i) * seq_len;
              const double* go = self.grad.data() + (row0 + i) * width + h * d;
              double dot = 0.0;
              for (size_t j = 0; j < seq_len; ++j) {
                if (!mask[row0 + j]) continue;
                const double* vj = vn.value.data() + (row0 + j) * width + h * d;
                double s = 0.0;
                for (size_t t = 0; t < d; ++t) s += go[t] * vj[t];
                dp[j] = s;
                dot += p[j] * s;
                if (vn.requires_grad) {
                  double* gv = vn.grad.data() + (row0 + j) * width + h * d;
                  for (size_t t = 0; t < d; ++t) gv[t] += p[j] * go[t];
                }
              }
              const double* qi = qn.value.data() + (row0 + i) * width + h * d;
              double* gq = qn.requires_grad ? qn.grad.data() + (row0 + i) * width + h * d : nullptr;
              for (size_t j = 0; j < seq_len; ++j) {
                if (!mask[row0 + j]) continue;
                const double ds = p[j] * (dp[j] - dot) * inv_sqrt_d;
                const double* kj = kn.value.data() + (row0 + j) * width + h * d;
                if (gq) {
                  for (size_t t = 0; t < d; ++t) gq[t] += ds * kj[t];
                }
                if (kn.requires_grad) {
                  double* gk = kn.grad.data() + (row0 + j) * width + h * d;
                  for (size_t t = 0; t < d; ++t) gk[t] += ds * qi[t];
                }
              }
            }
          }
        }
      });
}

Tensor grouped_row_dot(const Tensor& q, const Tensor& candidates, size_t group) {
  require_matrix(q, "grouped_row_dot");
  require_matrix(candidates, "grouped_row_dot");
  const size_t m = q.rows(), n = q.cols();
  if (group == 0 || candidates.rows() != m * group || candidates.cols() != n) {
    throw Error("grouped_row_dot: candidates must be (rows * group) x width");
  }
  std::vector<double> out(m * group, 0.0);
  auto qv = q.values();
  auto cv = candidates.values();
  for (size_t i = 0; i < m; ++i) {
    for (size_t c = 0; c < group; ++c) {
      double s = 0.0;
      for (size_t j = 0; j < n; ++j) s += qv[i * n + j] * cv[(i * group + c) * n + j];
      out[i * group + c] = s;
    }
  }
  return Tensor::make_result(matrix_shape(m, group), std::move(out), {q, candidates},
                             [m, n, group](Node& self) {
                               Node& qn = parent(self, 0);
                               Node& cn = parent(self, 1);
                               for (size_t i = 0; i < m; ++i) {
                                 for (size_t c = 0; c < group; ++c) {
                                   const double g = self.grad[i * group + c];
                                   for (size_t j = 0; j < n; ++j) {
                                     const size_t ci = (i * group + c) * n + j;
                                     if (qn.requires_grad) qn.grad[i * n + j] += g * cn.value[ci];
                                     if (cn.requires_grad) cn.grad[ci] += g * qn.value[i * n + j];
                                   }
                                 }
                               }
                             });
}

}  // namespace kgjoint::ops
