#include "tdadur/nnet/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "tdadur/error.hpp"

namespace tdadur::nn {

namespace {

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw StructuralError(std::string(op) + ": " + detail);
}

std::string shapes(const Tensor& a, const Tensor& b) {
  return a.shape_string() + " vs " + b.shape_string();
}

// out[n,m] += a[n,k] * b[k,m]
void gemm_nn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    double* crow = pc + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// out[n,m] += a[k,n]^T * b[k,m]
void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = out.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = pb + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double av = pa[p * n + i];
      if (av == 0.0) continue;
      double* crow = pc + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

Tensor transpose(const Tensor& a) {
  Tensor t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

// out[n,m] += a[n,k] * b[m,k]^T
void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  gemm_nn_acc(a, transpose(b), out);
}

}  // namespace

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
  Node node;
  node.name = "constant";
  node.own = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  Node node;
  node.name = "variable";
  node.own = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(const Tensor& value, Tensor* grad_sink) {
  Node node;
  node.name = "parameter";
  node.borrowed = &value;
  node.sink = grad_sink;
  node.requires_grad = grad_sink != nullptr;
  if (grad_sink && grad_sink->size() != value.size()) {
    throw StructuralError("Tape::leaf: gradient sink shape " + grad_sink->shape_string() +
                          " does not match " + value.shape_string());
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.borrowed ? *n.borrowed : n.own;
}

Tensor& Tape::grad_mut(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor::zeros_like(value(id));
  return n.grad;
}

Var Tape::record(const char* name, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node node;
  node.name = name;
  node.own = std::move(value);
  node.backward = std::move(backward);
  for (std::size_t in : inputs) node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  node.inputs = std::move(inputs);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw StructuralError("Tape::backward: variable belongs to another tape");
  if (value(loss.id()).size() != 1) {
    throw StructuralError("Tape::backward: loss must be a single element, got " +
                          value(loss.id()).shape_string());
  }
  grad_mut(loss.id()).fill(1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (!n.inputs.empty()) {
      if (!n.backward) {
        throw StructuralError(std::string("Tape::backward: operation '") + n.name +
                              "' does not support differentiation");
      }
      n.backward(*this, id);
    }
    if (n.sink) n.sink->add_inplace(n.grad);
  }
}

void matmul_into(const Tensor& a, const Tensor& b, Tensor& out) {
  require(a.cols() == b.rows(), "matmul", shapes(a, b));
  out = Tensor(a.rows(), b.cols());
  gemm_nn_acc(a, b, out);
}

void softmax_inplace(std::span<double> row) {
  const double mx = *std::max_element(row.begin(), row.end());
  double z = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : row) v /= z;
}

Var matmul(Var a, Var b) {
  Tensor out;
  matmul_into(a.value(), b.value(), out);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("matmul", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& dy = t.grad_mut(self);
    if (t.requires_grad(ia)) gemm_nt_acc(dy, t.value(ib), t.grad_mut(ia));
    if (t.requires_grad(ib)) gemm_tn_acc(t.value(ia), dy, t.grad_mut(ib));
  });
}

Var matmul_nt(Var a, Var b) {
  require(a.cols() == b.cols(), "matmul_nt", shapes(a.value(), b.value()));
  Tensor out(a.rows(), b.rows());
  gemm_nt_acc(a.value(), b.value(), out);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("matmul_nt", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& dy = t.grad_mut(self);
    if (t.requires_grad(ia)) gemm_nn_acc(dy, t.value(ib), t.grad_mut(ia));
    if (t.requires_grad(ib)) gemm_tn_acc(dy, t.value(ia), t.grad_mut(ib));
  });
}

Var add(Var a, Var b) {
  require(a.value().size() == b.value().size(), "add", shapes(a.value(), b.value()));
  Tensor out = a.value();
  out.add_inplace(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("add", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& dy = t.grad_mut(self);
    if (t.requires_grad(ia)) t.grad_mut(ia).add_inplace(dy);
    if (t.requires_grad(ib)) t.grad_mut(ib).add_inplace(dy);
  });
}

Var sub(Var a, Var b) {
  require(a.value().size() == b.value().size(), "sub", shapes(a.value(), b.value()));
  Tensor out = a.value();
  out.add_inplace(b.value(), -1.0);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("sub", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& dy = t.grad_mut(self);
    if (t.requires_grad(ia)) t.grad_mut(ia).add_inplace(dy);
    if (t.requires_grad(ib)) t.grad_mut(ib).add_inplace(dy, -1.0);
  });
}

Var mul(Var a, Var b) {
  require(a.value().size() == b.value().size(), "mul", shapes(a.value(), b.value()));
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("mul", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& dy = t.grad_mut(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& dx = t.grad_mut(ia);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * y[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& dyb = t.grad_mut(ib);
      for (std::size_t i = 0; i < dyb.size(); ++i) dyb[i] += dy[i] * x[i];
    }
  });
}

Var add_row(Var a, Var row) {
  const Tensor& x = a.value();
  const Tensor& r = row.value();
  require(r.size() == x.cols(), "add_row", shapes(x, r));
  Tensor out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += r[j];
  }
  const std::size_t ia = a.id(), ir = row.id();
  return a.tape()->record("add_row", std::move(out), {ia, ir}, [ia, ir](Tape& t, std::size_t self) {
    const Tensor& dy = t.grad_mut(self);
    if (t.requires_grad(ia)) t.grad_mut(ia).add_inplace(dy);
    if (t.requires_grad(ir)) {
      Tensor& dr = t.grad_mut(ir);
      for (std::size_t i = 0; i < dy.rows(); ++i) {
        auto src = dy.row(i);
        for (std::size_t j = 0; j < src.size(); ++j) dr[j] += src[j];
      }
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  const std::size_t ia = a.id();
  return a.tape()->record("scale", std::move(out), {ia}, [ia, factor](Tape& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad_mut(ia).add_inplace(t.grad_mut(self), factor);
  });
}

Var mul_scalar(Var a, Var s) {
  require(s.value().size() == 1, "mul_scalar", "scalar operand has shape " + s.value().shape_string());
  const double sv = s.value()[0];
  Tensor out = a.value();
  for (double& v : out.data()) v *= sv;
  const std::size_t ia = a.id(), is = s.id();
  return a.tape()->record("mul_scalar", std::move(out), {ia, is}, [ia, is](Tape& t, std::size_t self) {
    const Tensor& dy = t.grad_mut(self);
    const double sv = t.value(is)[0];
    if (t.requires_grad(ia)) t.grad_mut(ia).add_inplace(dy, sv);
    if (t.requires_grad(is)) {
      const Tensor& x = t.value(ia);
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += dy[i] * x[i];
      t.grad_mut(is)[0] += acc;
    }
  });
}

namespace {

template <class F, class D>
Var elementwise(const char* name, Var a, F f, D df) {
  const Tensor& x = a.value();
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return a.tape()->record(name, std::move(y), {ia}, [ia, df](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    const Tensor& dy = t.grad_mut(self);
    Tensor& dx = t.grad_mut(ia);
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] += dy[i] * df(x[i], y[i]);
  });
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var reciprocal(Var a) {
  return elementwise("reciprocal", a, [](double x) { return 1.0 / x; },
                     [](double, double y) { return -y * y; });
}

Var square(Var a) {
  return elementwise("square", a, [](double x) { return x * x; },
                     [](double x, double) { return 2.0 * x; });
}

Var exp(Var a) {
  return elementwise("exp", a, [](double x) { return std::exp(x); },
                     [](double, double y) { return y; });
}

Var log1p(Var a) {
  return elementwise("log1p", a, [](double x) { return std::log1p(x); },
                     [](double x, double) { return 1.0 / (1.0 + x); });
}

Var expm1_floor(Var a, double floor) {
  return elementwise(
      "expm1_floor", a, [floor](double x) { return std::max(std::expm1(x), floor); },
      [floor](double x, double) { return std::expm1(x) > floor ? std::exp(x) : 0.0; });
}

Var relu(Var a) {
  return elementwise("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                     [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var gelu(Var a) {
  return elementwise(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); },
      [](double x, double) {
        const double u = kGeluC * (x + kGeluA * x * x * x);
        const double th = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
      });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& in = x.value();
  const std::size_t n = in.rows(), m = in.cols();
  require(gain.value().size() == m && bias.value().size() == m, "layer_norm",
          "gain/bias must have " + std::to_string(m) + " entries");
  Tensor out(n, m);
  // Normalised activations and inverse deviations are kept for backward.
  auto xhat = std::make_shared<Tensor>(n, m);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  const Tensor& g = gain.value();
  const Tensor& b = bias.value();
  for (std::size_t i = 0; i < n; ++i) {
    auto row = in.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < m; ++j) {
      const double h = (row[j] - mean) * is;
      (*xhat)(i, j) = h;
      out(i, j) = g[j] * h + b[j];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape()->record(
      "layer_norm", std::move(out), {ix, ig, ib}, [ix, ig, ib, xhat, inv_std](Tape& t, std::size_t self) {
        const Tensor& dy = t.grad_mut(self);
        const Tensor& g = t.value(ig);
        const std::size_t n = dy.rows(), m = dy.cols();
        if (t.requires_grad(ig)) {
          Tensor& dg = t.grad_mut(ig);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) dg[j] += dy(i, j) * (*xhat)(i, j);
        }
        if (t.requires_grad(ib)) {
          Tensor& db = t.grad_mut(ib);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) db[j] += dy(i, j);
        }
        if (t.requires_grad(ix)) {
          Tensor& dx = t.grad_mut(ix);
          std::vector<double> dh(m);
          for (std::size_t i = 0; i < n; ++i) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
              dh[j] = dy(i, j) * g[j];
              mean_dh += dh[j];
              mean_dh_h += dh[j] * (*xhat)(i, j);
            }
            mean_dh /= static_cast<double>(m);
            mean_dh_h /= static_cast<double>(m);
            for (std::size_t j = 0; j < m; ++j) {
              dx(i, j) += (*inv_std)[i] * (dh[j] - mean_dh - (*xhat)(i, j) * mean_dh_h);
            }
          }
        }
      });
}

Var softmax_rows(Var a) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i) softmax_inplace(out.row(i));
  const std::size_t ia = a.id();
  return a.tape()->record("softmax_rows", std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& y = t.value(self);
    const Tensor& dy = t.grad_mut(self);
    Tensor& dx = t.grad_mut(ia);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += dy(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) += y(i, j) * (dy(i, j) - dot);
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  const std::size_t n = parts[0].rows();
  std::size_t m = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    require(p.rows() == n, "concat_cols", "row counts differ");
    m += p.cols();
    ids.push_back(p.id());
  }
  Tensor out(n, m);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, off + j) = v(i, j);
    off += v.cols();
  }
  Tape* tape = parts[0].tape();
  return tape->record("concat_cols", std::move(out), ids, [ids](Tape& t, std::size_t self) {
    const Tensor& dy = t.grad_mut(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t w = t.value(id).cols();
      if (t.requires_grad(id)) {
        Tensor& dx = t.grad_mut(id);
        for (std::size_t i = 0; i < dy.rows(); ++i)
          for (std::size_t j = 0; j < w; ++j) dx(i, j) += dy(i, off + j);
      }
      off += w;
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t width) {
  const Tensor& x = a.value();
  require(start + width <= x.cols(), "slice_cols", "range exceeds " + x.shape_string());
  Tensor out(x.rows(), width);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < width; ++j) out(i, j) = x(i, start + j);
  const std::size_t ia = a.id();
  return a.tape()->record("slice_cols", std::move(out), {ia}, [ia, start](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& dy = t.grad_mut(self);
    Tensor& dx = t.grad_mut(ia);
    for (std::size_t i = 0; i < dy.rows(); ++i)
      for (std::size_t j = 0; j < dy.cols(); ++j) dx(i, start + j) += dy(i, j);
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Tensor& tab = table.value();
  const std::size_t m = tab.cols();
  Tensor out(ids.size(), m);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && static_cast<std::size_t>(ids[i]) < tab.rows(), "gather_rows",
            "index " + std::to_string(ids[i]) + " outside table " + tab.shape_string());
    auto src = tab.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  const std::size_t it = table.id();
  std::vector<int> idx(ids.begin(), ids.end());
  return table.tape()->record("gather_rows", std::move(out), {it},
                              [it, idx = std::move(idx)](Tape& t, std::size_t self) {
                                if (!t.requires_grad(it)) return;
                                const Tensor& dy = t.grad_mut(self);
                                Tensor& dt = t.grad_mut(it);
                                for (std::size_t i = 0; i < idx.size(); ++i) {
                                  auto dst = dt.row(static_cast<std::size_t>(idx[i]));
                                  auto src = dy.row(i);
                                  for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
                                }
                              });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape()->record("sum", Tensor(1, 1, s), {ia}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const double g = t.grad_mut(self)[0];
    for (double& v : t.grad_mut(ia).data()) v += g;
  });
}

Var cross_entropy_rows(Var logits, std::span<const int> targets, std::span<const double> weights) {
  const Tensor& z = logits.value();
  require(targets.size() == z.rows() && weights.size() == z.rows(), "cross_entropy_rows",
          "targets/weights must have one entry per row");
  auto probs = std::make_shared<Tensor>(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    require(targets[i] >= 0 && static_cast<std::size_t>(targets[i]) < z.cols(), "cross_entropy_rows",
            "target " + std::to_string(targets[i]) + " outside " + std::to_string(z.cols()) + " classes");
    auto row = z.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double lse = 0.0;
    for (double v : row) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    loss += weights[i] * (lse - row[static_cast<std::size_t>(targets[i])]);
    softmax_inplace(probs->row(i));
  }
  const std::size_t iz = logits.id();
  std::vector<int> tg(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  return logits.tape()->record(
      "cross_entropy_rows", Tensor(1, 1, loss), {iz},
      [iz, probs, tg = std::move(tg), w = std::move(w)](Tape& t, std::size_t self) {
        if (!t.requires_grad(iz)) return;
        const double g = t.grad_mut(self)[0];
        Tensor& dz = t.grad_mut(iz);
        for (std::size_t i = 0; i < probs->rows(); ++i) {
          if (w[i] == 0.0) continue;
          const double scale = g * w[i];
          for (std::size_t j = 0; j < probs->cols(); ++j) dz(i, j) += scale * (*probs)(i, j);
          dz(i, static_cast<std::size_t>(tg[i])) -= scale;
        }
      });
}

}  // namespace tdadur::nn
