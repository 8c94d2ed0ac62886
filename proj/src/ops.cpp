#include "menan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>

#include "menan/error.hpp"

namespace menan::numerics {

namespace {

void check_rank(const Tensor& t, std::size_t rank, const char* op,
                const char* what) {
  if (!t.defined() || t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " +
                         std::to_string(rank) + ", got " +
                         (t.defined() ? shape_str(t.shape()) : "undefined"));
  }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void check_finite(const std::vector<double>& values, OpKind kind) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite output from ") +
                         op_name(kind));
    }
  }
}

Tensor record(OpKind kind, Shape shape, std::vector<double> value,
              std::initializer_list<Tensor> inputs, BackwardFn fn) {
  check_finite(value, kind);
  auto node = std::make_shared<Node>();
  node->kind = kind;
  node->shape = std::move(shape);
  node->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

Tensor record_many(OpKind kind, Shape shape, std::vector<double> value,
                   std::span<const Tensor> inputs, BackwardFn fn) {
  check_finite(value, kind);
  auto node = std::make_shared<Node>();
  node->kind = kind;
  node->shape = std::move(shape);
  node->value = std::move(value);
  for (const auto& in : inputs) {
    if (in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

/// Gradient sink of input `i`, or an empty span when it needs none.
std::span<double> sink(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return {};
  return in.grad_buffer();
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

namespace {

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_rank(a, 2, "matmul", "lhs");
  check_rank(b, 2, "matmul", "rhs");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      axpy(av[i * k + p], bv + p * n, out.data() + i * n, n);
    }
  }
  return record(OpKind::MatMul, {m, n}, std::move(out), {a, b},
                [m, k, n](Node& self) {
                  const double* g = self.grad.data();
                  const double* av = self.inputs[0]->value.data();
                  const double* bv = self.inputs[1]->value.data();
                  if (auto ga = sink(self, 0); !ga.empty()) {
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t p = 0; p < k; ++p)
                        ga[i * k + p] += dot(g + i * n, bv + p * n, n);
                  }
                  if (auto gb = sink(self, 1); !gb.empty()) {
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t p = 0; p < k; ++p)
                        axpy(av[i * k + p], g + i * n, gb.data() + p * n, n);
                  }
                });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  check_rank(weight, 2, "linear", "weight");
  check_rank(bias, 1, "linear", "bias");
  if (!x.defined() || (x.rank() != 1 && x.rank() != 2)) {
    throw DimensionError("linear: input must have rank 1 or 2");
  }
  const std::size_t out_dim = weight.dim(0), in_dim = weight.dim(1);
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
  if (x.shape().back() != in_dim || bias.dim(0) != out_dim) {
    throw DimensionError("linear: input " + shape_str(x.shape()) +
                         ", weight " + shape_str(weight.shape()) + ", bias " +
                         shape_str(bias.shape()));
  }
  std::vector<double> out(rows * out_dim);
  const double* xv = x.values().data();
  const double* wv = weight.values().data();
  const double* bv = bias.values().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out_dim; ++o)
      out[r * out_dim + o] = bv[o] + dot(wv + o * in_dim, xv + r * in_dim, in_dim);
  Shape shape = x.rank() == 1 ? Shape{out_dim} : Shape{rows, out_dim};
  return record(
      OpKind::Linear, std::move(shape), std::move(out), {x, weight, bias},
      [rows, in_dim, out_dim](Node& self) {
        const double* g = self.grad.data();
        const double* xv = self.inputs[0]->value.data();
        const double* wv = self.inputs[1]->value.data();
        auto gx = sink(self, 0);
        auto gw = sink(self, 1);
        auto gb = sink(self, 2);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t o = 0; o < out_dim; ++o) {
            double go = g[r * out_dim + o];
            if (go == 0.0) continue;
            if (!gx.empty()) axpy(go, wv + o * in_dim, gx.data() + r * in_dim, in_dim);
            if (!gw.empty()) axpy(go, xv + r * in_dim, gw.data() + o * in_dim, in_dim);
            if (!gb.empty()) gb[o] += go;
          }
        }
      });
}

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel,
                                 std::size_t stride) {
  if (stride == 0 || kernel == 0 || length < kernel) return 0;
  return (length - kernel) / stride + 1;
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride) {
  check_rank(x, 2, "conv1d", "input");
  check_rank(weight, 3, "conv1d", "weight");
  check_rank(bias, 1, "conv1d", "bias");
  const std::size_t length = x.dim(0), in_ch = x.dim(1);
  const std::size_t out_ch = weight.dim(0), kernel = weight.dim(1);
  if (weight.dim(2) != in_ch || bias.dim(0) != out_ch || stride == 0) {
    throw DimensionError("conv1d: input " + shape_str(x.shape()) +
                         ", weight " + shape_str(weight.shape()) + ", bias " +
                         shape_str(bias.shape()));
  }
  const std::size_t steps = conv1d_output_length(length, kernel, stride);
  if (steps == 0) {
    throw DimensionError("conv1d: input length " + std::to_string(length) +
                         " shorter than kernel " + std::to_string(kernel));
  }
  // A window of K consecutive rows of x is contiguous and laid out [K][Cin],
  // matching one output channel's weight slice.
  const std::size_t patch = kernel * in_ch;
  std::vector<double> out(steps * out_ch);
  const double* xv = x.values().data();
  const double* wv = weight.values().data();
  const double* bv = bias.values().data();
  for (std::size_t t = 0; t < steps; ++t) {
    const double* window = xv + t * stride * in_ch;
    for (std::size_t o = 0; o < out_ch; ++o)
      out[t * out_ch + o] = bv[o] + dot(wv + o * patch, window, patch);
  }
  return record(
      OpKind::Conv1d, {steps, out_ch}, std::move(out), {x, weight, bias},
      [steps, out_ch, patch, stride, in_ch](Node& self) {
        const double* g = self.grad.data();
        const double* xv = self.inputs[0]->value.data();
        const double* wv = self.inputs[1]->value.data();
        auto gx = sink(self, 0);
        auto gw = sink(self, 1);
        auto gb = sink(self, 2);
        for (std::size_t t = 0; t < steps; ++t) {
          const std::size_t offset = t * stride * in_ch;
          for (std::size_t o = 0; o < out_ch; ++o) {
            double go = g[t * out_ch + o];
            if (go == 0.0) continue;
            if (!gx.empty()) axpy(go, wv + o * patch, gx.data() + offset, patch);
            if (!gw.empty()) axpy(go, xv + offset, gw.data() + o * patch, patch);
            if (!gb.empty()) gb[o] += go;
          }
        }
      });
}

Tensor gru_cell(const Tensor& x, const Tensor& h, const Tensor& w_ih,
                const Tensor& w_hh, const Tensor& b_ih, const Tensor& b_hh) {
  check_rank(x, 1, "gru_cell", "input");
  check_rank(h, 1, "gru_cell", "hidden");
  check_rank(w_ih, 2, "gru_cell", "w_ih");
  check_rank(w_hh, 2, "gru_cell", "w_hh");
  check_rank(b_ih, 1, "gru_cell", "b_ih");
  check_rank(b_hh, 1, "gru_cell", "b_hh");
  const std::size_t in = x.dim(0), hid = h.dim(0);
  if (w_ih.dim(0) != 3 * hid || w_ih.dim(1) != in || w_hh.dim(0) != 3 * hid ||
      w_hh.dim(1) != hid || b_ih.dim(0) != 3 * hid || b_hh.dim(0) != 3 * hid) {
    throw DimensionError("gru_cell: inconsistent shapes for input " +
                         shape_str(x.shape()) + " and hidden " +
                         shape_str(h.shape()));
  }
  const double* xv = x.values().data();
  const double* hv = h.values().data();
  const double* wi = w_ih.values().data();
  const double* wh = w_hh.values().data();
  const double* bi = b_ih.values().data();
  const double* bh = b_hh.values().data();

  // saved = [r | z | n | W_hn h + b_hn]
  std::vector<double> saved(4 * hid);
  std::vector<double> out(hid);
  for (std::size_t j = 0; j < hid; ++j) {
    double gi_r = bi[j] + dot(wi + j * in, xv, in);
    double gi_z = bi[hid + j] + dot(wi + (hid + j) * in, xv, in);
    double gi_n = bi[2 * hid + j] + dot(wi + (2 * hid + j) * in, xv, in);
    double gh_r = bh[j] + dot(wh + j * hid, hv, hid);
    double gh_z = bh[hid + j] + dot(wh + (hid + j) * hid, hv, hid);
    double gh_n = bh[2 * hid + j] + dot(wh + (2 * hid + j) * hid, hv, hid);
    double r = sigmoid(gi_r + gh_r);
    double z = sigmoid(gi_z + gh_z);
    double n = std::tanh(gi_n + r * gh_n);
    saved[j] = r;
    saved[hid + j] = z;
    saved[2 * hid + j] = n;
    saved[3 * hid + j] = gh_n;
    out[j] = (1.0 - z) * n + z * hv[j];
  }
  return record(
      OpKind::GruCell, {hid}, std::move(out), {x, h, w_ih, w_hh, b_ih, b_hh},
      [in, hid, saved = std::move(saved)](Node& self) {
        const double* g = self.grad.data();
        const double* xv = self.inputs[0]->value.data();
        const double* hv = self.inputs[1]->value.data();
        const double* wi = self.inputs[2]->value.data();
        const double* wh = self.inputs[3]->value.data();
        std::vector<double> d_gi(3 * hid), d_gh(3 * hid);
        auto gh = sink(self, 1);
        for (std::size_t j = 0; j < hid; ++j) {
          double r = saved[j], z = saved[hid + j], n = saved[2 * hid + j];
          double gh_n = saved[3 * hid + j];
          double dn = g[j] * (1.0 - z);
          double dz = g[j] * (hv[j] - n);
          double dn_pre = dn * (1.0 - n * n);
          double dr = dn_pre * gh_n;
          double dz_pre = dz * z * (1.0 - z);
          double dr_pre = dr * r * (1.0 - r);
          d_gi[j] = dr_pre;
          d_gi[hid + j] = dz_pre;
          d_gi[2 * hid + j] = dn_pre;
          d_gh[j] = dr_pre;
          d_gh[hid + j] = dz_pre;
          d_gh[2 * hid + j] = dn_pre * r;
          if (!gh.empty()) gh[j] += g[j] * z;
        }
        auto gx = sink(self, 0);
        auto gwi = sink(self, 2);
        auto gwh = sink(self, 3);
        auto gbi = sink(self, 4);
        auto gbh = sink(self, 5);
        for (std::size_t row = 0; row < 3 * hid; ++row) {
          double di = d_gi[row], dh = d_gh[row];
          if (!gx.empty()) axpy(di, wi + row * in, gx.data(), in);
          if (!gh.empty()) axpy(dh, wh + row * hid, gh.data(), hid);
          if (!gwi.empty()) axpy(di, xv, gwi.data() + row * in, in);
          if (!gwh.empty()) axpy(dh, hv, gwh.data() + row * hid, hid);
          if (!gbi.empty()) gbi[row] += di;
          if (!gbh.empty()) gbh[row] += dh;
        }
      });
}

Tensor prelu(const Tensor& x, const Tensor& slope) {
  if (!slope.defined() || slope.numel() != 1) {
    throw DimensionError("prelu: slope must hold exactly one value");
  }
  const double a = slope[0];
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out)
    if (v <= 0.0) v *= a;
  return record(OpKind::PRelu, x.shape(), std::move(out), {x, slope},
                [](Node& self) {
                  const auto& xv = self.inputs[0]->value;
                  const double a = self.inputs[1]->value[0];
                  auto gx = sink(self, 0);
                  auto ga = sink(self, 1);
                  double acc = 0.0;
                  for (std::size_t i = 0; i < xv.size(); ++i) {
                    double g = self.grad[i];
                    if (xv[i] > 0.0) {
                      if (!gx.empty()) gx[i] += g;
                    } else {
                      if (!gx.empty()) gx[i] += a * g;
                      acc += xv[i] * g;
                    }
                  }
                  if (!ga.empty()) ga[0] += acc;
                });
}

namespace {

std::size_t last_dim(const Tensor& x, const char* op) {
  if (!x.defined() || x.rank() == 0 || x.shape().back() == 0) {
    throw DimensionError(std::string(op) + ": needs a non-empty last axis");
  }
  return x.shape().back();
}

}  // namespace

Tensor softmax(const Tensor& x) {
  const std::size_t c = last_dim(x, "softmax");
  const std::size_t rows = x.numel() / c;
  std::vector<double> out(x.numel());
  const double* xv = x.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv + r * c;
    double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[r * c + j] = std::exp(row[j] - mx);
      total += out[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] /= total;
  }
  return record(OpKind::Softmax, x.shape(), std::move(out), {x},
                [rows, c](Node& self) {
                  auto gx = sink(self, 0);
                  const double* y = self.value.data();
                  const double* g = self.grad.data();
                  for (std::size_t r = 0; r < rows; ++r) {
                    double inner = dot(g + r * c, y + r * c, c);
                    for (std::size_t j = 0; j < c; ++j)
                      gx[r * c + j] += y[r * c + j] * (g[r * c + j] - inner);
                  }
                });
}

Tensor log_softmax(const Tensor& x) {
  const std::size_t c = last_dim(x, "log_softmax");
  const std::size_t rows = x.numel() / c;
  std::vector<double> out(x.numel());
  const double* xv = x.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv + r * c;
    double mx = *std::max_element(row, row + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(row[j] - mx);
    double lse = mx + std::log(total);
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = row[j] - lse;
  }
  return record(OpKind::LogSoftmax, x.shape(), std::move(out), {x},
                [rows, c](Node& self) {
                  auto gx = sink(self, 0);
                  const double* y = self.value.data();
                  const double* g = self.grad.data();
                  for (std::size_t r = 0; r < rows; ++r) {
                    double gsum = 0.0;
                    for (std::size_t j = 0; j < c; ++j) gsum += g[r * c + j];
                    for (std::size_t j = 0; j < c; ++j)
                      gx[r * c + j] +=
                          g[r * c + j] - std::exp(y[r * c + j]) * gsum;
                  }
                });
}

Tensor log(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(x[i] > 0.0)) throw NumericError("log of non-positive value");
    out[i] = std::log(x[i]);
  }
  return record(OpKind::Log, x.shape(), std::move(out), {x}, [](Node& self) {
    auto gx = sink(self, 0);
    const auto& xv = self.inputs[0]->value;
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += self.grad[i] / xv[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return record(OpKind::Add, a.shape(), std::move(out), {a, b},
                [](Node& self) {
                  for (std::size_t k = 0; k < 2; ++k) {
                    auto gi = sink(self, k);
                    for (std::size_t i = 0; i < gi.size(); ++i)
                      gi[i] += self.grad[i];
                  }
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return record(OpKind::Sub, a.shape(), std::move(out), {a, b},
                [](Node& self) {
                  auto ga = sink(self, 0);
                  auto gb = sink(self, 1);
                  for (std::size_t i = 0; i < ga.size(); ++i)
                    ga[i] += self.grad[i];
                  for (std::size_t i = 0; i < gb.size(); ++i)
                    gb[i] -= self.grad[i];
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return record(OpKind::Mul, a.shape(), std::move(out), {a, b},
                [](Node& self) {
                  const auto& av = self.inputs[0]->value;
                  const auto& bv = self.inputs[1]->value;
                  auto ga = sink(self, 0);
                  auto gb = sink(self, 1);
                  for (std::size_t i = 0; i < ga.size(); ++i)
                    ga[i] += self.grad[i] * bv[i];
                  for (std::size_t i = 0; i < gb.size(); ++i)
                    gb[i] += self.grad[i] * av[i];
                });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return record(OpKind::Scale, x.shape(), std::move(out), {x},
                [factor](Node& self) {
                  auto gx = sink(self, 0);
                  for (std::size_t i = 0; i < gx.size(); ++i)
                    gx[i] += self.grad[i] * factor;
                });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return record(OpKind::Sum, {}, {total}, {x}, [](Node& self) {
    auto gx = sink(self, 0);
    for (double& g : gx) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  double total = 0.0;
  for (double v : x.values()) total += v;
  const double n = static_cast<double>(x.numel());
  return record(OpKind::Mean, {}, {total / n}, {x}, [n](Node& self) {
    auto gx = sink(self, 0);
    for (double& g : gx) g += self.grad[0] / n;
  });
}

Tensor mean_time(const Tensor& x) {
  check_rank(x, 2, "mean_time", "input");
  const std::size_t steps = x.dim(0), ch = x.dim(1);
  if (steps == 0) throw DimensionError("mean_time: empty time axis");
  std::vector<double> out(ch, 0.0);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t c = 0; c < ch; ++c) out[c] += x[t * ch + c];
  for (double& v : out) v /= static_cast<double>(steps);
  return record(OpKind::MeanTime, {ch}, std::move(out), {x},
                [steps, ch](Node& self) {
                  auto gx = sink(self, 0);
                  for (std::size_t t = 0; t < steps; ++t)
                    for (std::size_t c = 0; c < ch; ++c)
                      gx[t * ch + c] += self.grad[c] / static_cast<double>(steps);
                });
}

Tensor std_time(const Tensor& x, double eps) {
  check_rank(x, 2, "std_time", "input");
  const std::size_t steps = x.dim(0), ch = x.dim(1);
  if (steps == 0) throw DimensionError("std_time: empty time axis");
  const double n = static_cast<double>(steps);
  std::vector<double> mu(ch, 0.0), out(ch, 0.0);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t c = 0; c < ch; ++c) mu[c] += x[t * ch + c];
  for (double& v : mu) v /= n;
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t c = 0; c < ch; ++c) {
      double d = x[t * ch + c] - mu[c];
      out[c] += d * d;
    }
  for (double& v : out) v = std::sqrt(v / n + eps);
  return record(OpKind::StdTime, {ch}, std::move(out), {x},
                [steps, ch, n, mu = std::move(mu)](Node& self) {
                  auto gx = sink(self, 0);
                  const auto& xv = self.inputs[0]->value;
                  for (std::size_t t = 0; t < steps; ++t)
                    for (std::size_t c = 0; c < ch; ++c)
                      gx[t * ch + c] += self.grad[c] *
                                        (xv[t * ch + c] - mu[c]) /
                                        (n * self.value[c]);
                });
}

Tensor max_time(const Tensor& x) {
  check_rank(x, 2, "max_time", "input");
  const std::size_t steps = x.dim(0), ch = x.dim(1);
  if (steps == 0) throw DimensionError("max_time: empty time axis");
  std::vector<double> out(ch);
  std::vector<std::size_t> arg(ch, 0);
  for (std::size_t c = 0; c < ch; ++c) out[c] = x[c];
  for (std::size_t t = 1; t < steps; ++t)
    for (std::size_t c = 0; c < ch; ++c)
      if (x[t * ch + c] > out[c]) {
        out[c] = x[t * ch + c];
        arg[c] = t;
      }
  return record(OpKind::MaxTime, {ch}, std::move(out), {x},
                [ch, arg = std::move(arg)](Node& self) {
                  auto gx = sink(self, 0);
                  for (std::size_t c = 0; c < ch; ++c)
                    gx[arg[c] * ch + c] += self.grad[c];
                });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape tail(parts[0].shape().begin() + (parts[0].rank() ? 1 : 0),
             parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<std::size_t> offsets;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.rank() == 0 ||
        !std::equal(tail.begin(), tail.end(), p.shape().begin() + 1,
                    p.shape().end())) {
      throw DimensionError("concat: incompatible part " + shape_str(p.shape()));
    }
    offsets.push_back(out.size());
    rows += p.dim(0);
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  return record_many(OpKind::Concat, std::move(shape), std::move(out), parts,
                     [offsets = std::move(offsets)](Node& self) {
                       for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                         auto gk = sink(self, k);
                         for (std::size_t i = 0; i < gk.size(); ++i)
                           gk[i] += self.grad[offsets[k] + i];
                       }
                     });
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("stack: no inputs");
  const Shape& inner = parts[0].shape();
  std::vector<double> out;
  out.reserve(parts.size() * parts[0].numel());
  for (const auto& p : parts) {
    if (p.shape() != inner) {
      throw DimensionError("stack: part " + shape_str(p.shape()) +
                           " differs from " + shape_str(inner));
    }
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  Shape shape{parts.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  const std::size_t stride = parts[0].numel();
  return record_many(OpKind::Stack, std::move(shape), std::move(out), parts,
                     [stride](Node& self) {
                       for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                         auto gk = sink(self, k);
                         for (std::size_t i = 0; i < gk.size(); ++i)
                           gk[i] += self.grad[k * stride + i];
                       }
                     });
}

Tensor select_row(const Tensor& x, std::size_t index) {
  check_rank(x, 2, "select_row", "input");
  if (index >= x.dim(0)) {
    throw DimensionError("select_row: index " + std::to_string(index) +
                         " out of range for " + shape_str(x.shape()));
  }
  const std::size_t cols = x.dim(1);
  std::vector<double> out(x.values().begin() + index * cols,
                          x.values().begin() + (index + 1) * cols);
  return record(OpKind::SelectRow, {cols}, std::move(out), {x},
                [index, cols](Node& self) {
                  auto gx = sink(self, 0);
                  for (std::size_t c = 0; c < cols; ++c)
                    gx[index * cols + c] += self.grad[c];
                });
}

Tensor scale_grad(const Tensor& x, double factor) {
  std::vector<double> out(x.values().begin(), x.values().end());
  return record(OpKind::ScaleGrad, x.shape(), std::move(out), {x},
                [factor](Node& self) {
                  auto gx = sink(self, 0);
                  for (std::size_t i = 0; i < gx.size(); ++i)
                    gx[i] += self.grad[i] * factor;
                });
}

}  // namespace menan::numerics
