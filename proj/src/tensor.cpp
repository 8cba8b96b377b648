#include "plainpt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "plainpt/rng.hpp"

namespace plainpt {

using detail::Node;

namespace {

thread_local bool g_grad_enabled = true;

std::string shapes_msg(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b);
}

void check_finite(const char* op, const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite output");
  }
}

// Builds the output node and, when recording, links it to its inputs. The
// caller installs the backward closure iff the result requires grad.
Tensor record(const char* op, Shape shape, std::vector<double> value,
              std::initializer_list<const Tensor*> inputs) {
  check_finite(op, value);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (g_grad_enabled) {
    for (const Tensor* t : inputs) {
      if (t->requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
    if (node->requires_grad) {
      for (const Tensor* t : inputs) node->inputs.push_back(t->node_ptr());
    }
  }
  return make_tensor(std::move(node));
}

Tensor record_many(const char* op, Shape shape, std::vector<double> value,
                   std::span<const Tensor> inputs) {
  check_finite(op, value);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (g_grad_enabled) {
    node->requires_grad =
        std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (node->requires_grad) {
      for (const Tensor& t : inputs) node->inputs.push_back(t.node_ptr());
    }
  }
  return make_tensor(std::move(node));
}

std::size_t last_dim(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor make_tensor(std::shared_ptr<Node> node) { return Tensor(std::move(node)); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
  return node_->value[0];
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

namespace {
thread_local BranchTrace* g_trace = nullptr;
}

BranchTrace::BranchTrace() : previous_(g_trace) { g_trace = this; }
BranchTrace::~BranchTrace() { g_trace = previous_; }

void BranchTrace::record(std::uint64_t choice) { hash_ = mix64(hash_ ^ (choice + 0x9e3779b97f4a7c15ULL)); }

namespace {
template <typename F>
void trace_choices(std::size_t n, F&& choice) {
  if (g_trace == nullptr) return;
  for (std::size_t i = 0; i < n; ++i) g_trace->record(choice(i));
}
}  // namespace

// ---- linear algebra -------------------------------------------------------

namespace {

// c[rows, cols] += a[rows, inner] * b[inner, cols], four rows of c at a time.
void gemm_acc(const double* a, const double* b, double* c, std::size_t rows, std::size_t inner, std::size_t cols) {
  std::size_t i = 0;
  for (; i + 4 <= rows; i += 4) {
    double* __restrict c0 = c + i * cols;
    double* __restrict c1 = c0 + cols;
    double* __restrict c2 = c1 + cols;
    double* __restrict c3 = c2 + cols;
    for (std::size_t k = 0; k < inner; ++k) {
      const double a0 = a[i * inner + k], a1 = a[(i + 1) * inner + k];
      const double a2 = a[(i + 2) * inner + k], a3 = a[(i + 3) * inner + k];
      if (a0 == 0.0 && a1 == 0.0 && a2 == 0.0 && a3 == 0.0) continue;
      const double* __restrict bk = b + k * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        const double v = bk[j];
        c0[j] += a0 * v;
        c1[j] += a1 * v;
        c2[j] += a2 * v;
        c3[j] += a3 * v;
      }
    }
  }
  for (; i < rows; ++i) {
    double* __restrict ci = c + i * cols;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = a[i * inner + k];
      if (aik == 0.0) continue;
      const double* __restrict bk = b + k * cols;
      for (std::size_t j = 0; j < cols; ++j) ci[j] += aik * bk[j];
    }
  }
}

std::vector<double> transposed(const double* v, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = v[i * cols + j];
  return t;
}

}  // namespace

Tensor matmul(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2 || x.rank() == 0 || x.shape().back() != w.dim(0)) {
    throw ShapeError(shapes_msg("matmul", x.shape(), w.shape()));
  }
  const std::size_t n = w.dim(0), m = w.dim(1), rows = x.numel() / n;
  std::vector<double> c(rows * m, 0.0);
  gemm_acc(x.data().data(), w.data().data(), c.data(), rows, n, m);
  Shape shape = x.shape();
  shape.back() = m;
  Tensor out = record("matmul", std::move(shape), std::move(c), {&x, &w});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* nx = x.node();
    Node* nw = w.node();
    o->backward = [o, nx, nw, n, m, rows] {
      const double* g = o->grad.data();
      if (nx->requires_grad) {
        const std::vector<double> wt = transposed(nw->value.data(), n, m);
        gemm_acc(g, wt.data(), nx->ensure_grad().data(), rows, m, n);
      }
      if (nw->requires_grad) {
        const std::vector<double> xt = transposed(nx->value.data(), rows, n);
        gemm_acc(xt.data(), g, nw->ensure_grad().data(), n, rows, m);
      }
    };
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError(shapes_msg("matmul_nt", a.shape(), b.shape()));
  }
  const std::size_t p = a.dim(0), q = b.dim(0), d = a.dim(1);
  const double* av = a.data().data();
  const double* bv = b.data().data();
  std::vector<double> c(p * q);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < q; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += av[i * d + k] * bv[j * d + k];
      c[i * q + j] = s;
    }
  }
  Tensor out = record("matmul_nt", {p, q}, std::move(c), {&a, &b});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* na = a.node();
    Node* nb = b.node();
    o->backward = [o, na, nb, p, q, d] {
      const double* g = o->grad.data();
      if (na->requires_grad) {
        auto& ga = na->ensure_grad();
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t j = 0; j < q; ++j) {
            const double gij = g[i * q + j];
            for (std::size_t k = 0; k < d; ++k) ga[i * d + k] += gij * nb->value[j * d + k];
          }
      }
      if (nb->requires_grad) {
        auto& gb = nb->ensure_grad();
        for (std::size_t i = 0; i < p; ++i)
          for (std::size_t j = 0; j < q; ++j) {
            const double gij = g[i * q + j];
            for (std::size_t k = 0; k < d; ++k) gb[j * d + k] += gij * na->value[i * d + k];
          }
      }
    };
  }
  return out;
}

// ---- element-wise ---------------------------------------------------------

namespace {

enum class Binary { kAdd, kSub, kMul };

Tensor binary(const char* op, Binary kind, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(shapes_msg(op, a.shape(), b.shape()));
  const std::size_t n = a.numel();
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case Binary::kAdd: c[i] = a[i] + b[i]; break;
      case Binary::kSub: c[i] = a[i] - b[i]; break;
      case Binary::kMul: c[i] = a[i] * b[i]; break;
    }
  }
  Tensor out = record(op, a.shape(), std::move(c), {&a, &b});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* na = a.node();
    Node* nb = b.node();
    o->backward = [o, na, nb, n, kind] {
      const auto& g = o->grad;
      if (na->requires_grad) {
        auto& ga = na->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) ga[i] += kind == Binary::kMul ? g[i] * nb->value[i] : g[i];
      }
      if (nb->requires_grad) {
        auto& gb = nb->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          gb[i] += kind == Binary::kMul ? g[i] * na->value[i] : (kind == Binary::kSub ? -g[i] : g[i]);
        }
      }
    };
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", Binary::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", Binary::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", Binary::kMul, a, b); }

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != bias.dim(0)) {
    throw ShapeError(shapes_msg("add_bias", x.shape(), bias.shape()));
  }
  const std::size_t m = bias.dim(0), n = x.numel();
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = x[i] + bias[i % m];
  Tensor out = record("add_bias", x.shape(), std::move(c), {&x, &bias});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* nx = x.node();
    Node* nb = bias.node();
    o->backward = [o, nx, nb, n, m] {
      const auto& g = o->grad;
      if (nx->requires_grad) {
        auto& gx = nx->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
      }
      if (nb->requires_grad) {
        auto& gb = nb->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) gb[i % m] += g[i];
      }
    };
  }
  return out;
}

Tensor scale(const Tensor& x, double factor) {
  const std::size_t n = x.numel();
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = x[i] * factor;
  Tensor out = record("scale", x.shape(), std::move(c), {&x});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* nx = x.node();
    o->backward = [o, nx, n, factor] {
      auto& gx = nx->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) gx[i] += o->grad[i] * factor;
    };
  }
  return out;
}

Tensor relu(const Tensor& x) {
  const std::size_t n = x.numel();
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = x[i] > 0.0 ? x[i] : 0.0;
  trace_choices(n, [&](std::size_t i) { return static_cast<std::uint64_t>(x[i] > 0.0); });
  Tensor out = record("relu", x.shape(), std::move(c), {&x});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* nx = x.node();
    o->backward = [o, nx, n] {
      auto& gx = nx->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        if (nx->value[i] > 0.0) gx[i] += o->grad[i];
      }
    };
  }
  return out;
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("softmax: scalar input");
  const std::size_t m = last_dim(x), rows = x.numel() / m;
  std::vector<double> y(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * m;
    double* yr = y.data() + r * m;
    double mx = *std::max_element(xr, xr + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < m; ++j) yr[j] /= z;
  }
  Tensor out = record("softmax", x.shape(), std::move(y), {&x});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* nx = x.node();
    o->backward = [o, nx, m, rows] {
      auto& gx = nx->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* yr = o->value.data() + r * m;
        const double* gr = o->grad.data() + r * m;
        double dot = 0.0;
        for (std::size_t j = 0; j < m; ++j) dot += gr[j] * yr[j];
        for (std::size_t j = 0; j < m; ++j) gx[r * m + j] += yr[j] * (gr[j] - dot);
      }
    };
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0 || gamma.rank() != 1 || beta.shape() != gamma.shape() ||
      x.shape().back() != gamma.dim(0)) {
    throw ShapeError(shapes_msg("layer_norm", x.shape(), gamma.shape()));
  }
  const std::size_t m = gamma.dim(0), rows = x.numel() / m;
  std::vector<double> y(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_sigma = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * m;
    double mu = 0.0;
    for (std::size_t j = 0; j < m; ++j) mu += xr[j];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t j = 0; j < m; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[r] = is;
    for (std::size_t j = 0; j < m; ++j) {
      const double h = (xr[j] - mu) * is;
      (*xhat)[r * m + j] = h;
      y[r * m + j] = gamma[j] * h + beta[j];
    }
  }
  Tensor out = record("layer_norm", x.shape(), std::move(y), {&x, &gamma, &beta});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* nx = x.node();
    Node* ng = gamma.node();
    Node* nb = beta.node();
    o->backward = [o, nx, ng, nb, m, rows, xhat, inv_sigma] {
      const auto& g = o->grad;
      if (ng->requires_grad) {
        auto& gg = ng->ensure_grad();
        for (std::size_t i = 0; i < rows * m; ++i) gg[i % m] += g[i] * (*xhat)[i];
      }
      if (nb->requires_grad) {
        auto& gb = nb->ensure_grad();
        for (std::size_t i = 0; i < rows * m; ++i) gb[i % m] += g[i];
      }
      if (nx->requires_grad) {
        auto& gx = nx->ensure_grad();
        std::vector<double> dh(m);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t j = 0; j < m; ++j) {
            dh[j] = g[r * m + j] * ng->value[j];
            mean_dh += dh[j];
            mean_dh_h += dh[j] * (*xhat)[r * m + j];
          }
          mean_dh /= static_cast<double>(m);
          mean_dh_h /= static_cast<double>(m);
          for (std::size_t j = 0; j < m; ++j) {
            gx[r * m + j] += (*inv_sigma)[r] * (dh[j] - mean_dh - (*xhat)[r * m + j] * mean_dh_h);
          }
        }
      }
    };
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, const ForwardContext& ctx) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
  if (!ctx.training || rate == 0.0) return x;
  if (ctx.rng == nullptr) throw std::invalid_argument("dropout: training mode requires an rng");
  const std::size_t n = x.numel();
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    (*mask)[i] = ctx.rng->uniform() < rate ? 0.0 : keep_scale;
    y[i] = x[i] * (*mask)[i];
  }
  Tensor out = record("dropout", x.shape(), std::move(y), {&x});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* nx = x.node();
    o->backward = [o, nx, n, mask] {
      auto& gx = nx->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) gx[i] += o->grad[i] * (*mask)[i];
    };
  }
  return out;
}

// ---- reductions and reshaping ---------------------------------------------

MaxResult max_reduce(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("max_reduce: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  }
  const Shape& s = x.shape();
  const std::size_t len = s[axis];
  if (len == 0) throw ShapeError("max_reduce: empty axis in " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  std::vector<double> y(outer * inner);
  std::vector<std::size_t> arg(outer * inner, 0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const double* base = x.data().data() + o * len * inner + i;
      double best = base[0];
      std::size_t best_l = 0;
      for (std::size_t l = 1; l < len; ++l) {
        if (base[l * inner] > best) {
          best = base[l * inner];
          best_l = l;
        }
      }
      y[o * inner + i] = best;
      arg[o * inner + i] = best_l;
    }
  }
  trace_choices(arg.size(), [&](std::size_t i) { return static_cast<std::uint64_t>(arg[i]); });
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != axis) out_shape.push_back(s[i]);
  }
  Tensor out = record("max_reduce", std::move(out_shape), std::move(y), {&x});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* nx = x.node();
    o->backward = [o, nx, arg, outer, inner, len] {
      auto& gx = nx->ensure_grad();
      for (std::size_t a = 0; a < outer; ++a)
        for (std::size_t i = 0; i < inner; ++i) {
          gx[a * len * inner + arg[a * inner + i] * inner + i] += o->grad[a * inner + i];
        }
    };
  }
  return {std::move(out), std::move(arg)};
}

Tensor concat_last(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_last: no inputs");
  Shape lead = parts[0].shape();
  if (lead.empty()) throw ShapeError("concat_last: scalar input");
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    Shape pl = p.shape();
    if (pl.empty()) throw ShapeError("concat_last: scalar input");
    pl.pop_back();
    if (pl != lead) throw ShapeError(shapes_msg("concat_last", parts[0].shape(), p.shape()));
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  const std::size_t rows = shape_numel(lead);
  std::vector<double> y(rows * total);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      std::copy_n(parts[k].data().data() + r * widths[k], widths[k], y.data() + r * total + off);
      off += widths[k];
    }
  }
  Shape shape = lead;
  shape.push_back(total);
  Tensor out = record_many("concat_last", std::move(shape), std::move(y), parts);
  if (out.requires_grad()) {
    Node* o = out.node();
    o->backward = [o, widths, rows, total] {
      std::size_t off = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        Node* in = o->inputs[k].get();
        if (in->requires_grad) {
          auto& gi = in->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < widths[k]; ++j) gi[r * widths[k] + j] += o->grad[r * total + off + j];
        }
        off += widths[k];
      }
    };
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Shape tail = parts[0].shape();
  if (tail.empty()) throw ShapeError("concat_rows: scalar input");
  tail.erase(tail.begin());
  std::size_t rows = 0;
  std::vector<double> y;
  for (const Tensor& p : parts) {
    Shape pt = p.shape();
    if (pt.empty()) throw ShapeError("concat_rows: scalar input");
    pt.erase(pt.begin());
    if (pt != tail) throw ShapeError(shapes_msg("concat_rows", parts[0].shape(), p.shape()));
    rows += p.dim(0);
    y.insert(y.end(), p.data().begin(), p.data().end());
  }
  Shape shape = tail;
  shape.insert(shape.begin(), rows);
  Tensor out = record_many("concat_rows", std::move(shape), std::move(y), parts);
  if (out.requires_grad()) {
    Node* o = out.node();
    o->backward = [o] {
      std::size_t off = 0;
      for (auto& in : o->inputs) {
        const std::size_t n = in->value.size();
        if (in->requires_grad) {
          auto& gi = in->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) gi[i] += o->grad[off + i];
        }
        off += n;
      }
    };
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  if (x.rank() == 0) throw ShapeError("gather_rows: scalar input");
  const std::size_t rows = x.dim(0), width = x.numel() / std::max<std::size_t>(rows, 1);
  std::vector<double> y(indices.size() * width);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(indices[i]) + " out of range for " +
                       shape_str(x.shape()));
    }
    std::copy_n(x.data().data() + indices[i] * width, width, y.data() + i * width);
  }
  Shape shape = x.shape();
  shape[0] = indices.size();
  Tensor out = record("gather_rows", std::move(shape), std::move(y), {&x});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* nx = x.node();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    o->backward = [o, nx, idx, width] {
      auto& gx = nx->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < width; ++j) gx[idx[i] * width + j] += o->grad[i * width + j];
    };
  }
  return out;
}

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length) {
  if (x.rank() == 0 || start + length > x.shape().back()) {
    throw ShapeError("slice_last: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of bounds for " + shape_str(x.shape()));
  }
  const std::size_t m = x.shape().back(), rows = x.numel() / m;
  std::vector<double> y(rows * length);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.data().data() + r * m + start, length, y.data() + r * length);
  Shape shape = x.shape();
  shape.back() = length;
  Tensor out = record("slice_last", std::move(shape), std::move(y), {&x});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* nx = x.node();
    o->backward = [o, nx, m, rows, start, length] {
      auto& gx = nx->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < length; ++j) gx[r * m + start + j] += o->grad[r * length + j];
    };
  }
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t length) {
  if (x.rank() == 0 || start + length > x.dim(0)) {
    throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of bounds for " + shape_str(x.shape()));
  }
  std::vector<std::size_t> idx(length);
  for (std::size_t i = 0; i < length; ++i) idx[i] = start + i;
  return gather_rows(x, idx);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) throw ShapeError(shapes_msg("reshape", x.shape(), shape));
  std::vector<double> y(x.data().begin(), x.data().end());
  Tensor out = record("reshape", std::move(shape), std::move(y), {&x});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* nx = x.node();
    o->backward = [o, nx] {
      auto& gx = nx->ensure_grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o->grad[i];
    };
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = record("sum", {}, {s}, {&x});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* nx = x.node();
    o->backward = [o, nx] {
      auto& gx = nx->ensure_grad();
      for (double& g : gx) g += o->grad[0];
    };
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor group_weighted_sum(const Tensor& x, std::span<const double> weights, std::size_t group) {
  if (x.rank() != 2 || group == 0 || x.dim(0) % group != 0 || weights.size() != x.dim(0)) {
    throw ShapeError("group_weighted_sum: " + shape_str(x.shape()) + " with " + std::to_string(weights.size()) +
                     " weights in groups of " + std::to_string(group));
  }
  const std::size_t q = x.dim(0) / group, c = x.dim(1);
  std::vector<double> y(q * c, 0.0);
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = 0; j < group; ++j) {
      const double w = weights[i * group + j];
      const double* xr = x.data().data() + (i * group + j) * c;
      for (std::size_t k = 0; k < c; ++k) y[i * c + k] += w * xr[k];
    }
  Tensor out = record("group_weighted_sum", {q, c}, std::move(y), {&x});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* nx = x.node();
    std::vector<double> w(weights.begin(), weights.end());
    o->backward = [o, nx, w, q, c, group] {
      auto& gx = nx->ensure_grad();
      for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = 0; j < group; ++j)
          for (std::size_t k = 0; k < c; ++k) gx[(i * group + j) * c + k] += w[i * group + j] * o->grad[i * c + k];
    };
  }
  return out;
}

// ---- losses ---------------------------------------------------------------

namespace {

// Index of the nearest point of `set` (n x 3) to `p`, lowest index on ties.
std::size_t nearest(const double* p, const double* set, std::size_t n, double& best_d2) {
  std::size_t best = 0;
  best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    const double dx = p[0] - set[3 * j], dy = p[1] - set[3 * j + 1], dz = p[2] - set[3 * j + 2];
    const double d2 = dx * dx + dy * dy + dz * dz;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = j;
    }
  }
  return best;
}

}  // namespace

Tensor chamfer_l2_batch(const Tensor& pred, const Tensor& target) {
  if (pred.rank() != 3 || target.rank() != 3 || pred.dim(2) != 3 || target.dim(2) != 3 ||
      pred.dim(0) != target.dim(0)) {
    throw ShapeError(shapes_msg("chamfer_l2_batch", pred.shape(), target.shape()));
  }
  const std::size_t batch = pred.dim(0), na = pred.dim(1), nb = target.dim(1);
  if (batch > 0 && (na == 0 || nb == 0)) throw ShapeError("chamfer_l2_batch: empty point set");
  // For each point: index of its nearest neighbour in the other set.
  auto nn_ab = std::make_shared<std::vector<std::size_t>>(batch * na);
  auto nn_ba = std::make_shared<std::vector<std::size_t>>(batch * nb);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* p = pred.data().data() + b * na * 3;
    const double* q = target.data().data() + b * nb * 3;
    double sa = 0.0, sb = 0.0, d2 = 0.0;
    for (std::size_t i = 0; i < na; ++i) {
      (*nn_ab)[b * na + i] = nearest(p + 3 * i, q, nb, d2);
      sa += d2;
    }
    for (std::size_t j = 0; j < nb; ++j) {
      (*nn_ba)[b * nb + j] = nearest(q + 3 * j, p, na, d2);
      sb += d2;
    }
    total += sa / static_cast<double>(na) + sb / static_cast<double>(nb);
  }
  trace_choices(nn_ab->size(), [&](std::size_t i) { return static_cast<std::uint64_t>((*nn_ab)[i]); });
  trace_choices(nn_ba->size(), [&](std::size_t i) { return static_cast<std::uint64_t>((*nn_ba)[i]); });
  const double value = batch == 0 ? 0.0 : total / static_cast<double>(batch);
  Tensor out = record("chamfer_l2_batch", {}, {value}, {&pred, &target});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* np = pred.node();
    Node* nt = target.node();
    o->backward = [o, np, nt, batch, na, nb, nn_ab, nn_ba] {
      std::vector<double> gp(batch * na * 3, 0.0), gt(batch * nb * 3, 0.0);
      const double g = o->grad[0] / static_cast<double>(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = np->value.data() + b * na * 3;
        const double* q = nt->value.data() + b * nb * 3;
        for (std::size_t i = 0; i < na; ++i) {
          const std::size_t j = (*nn_ab)[b * na + i];
          for (std::size_t k = 0; k < 3; ++k) {
            const double d = 2.0 * (p[3 * i + k] - q[3 * j + k]) * g / static_cast<double>(na);
            gp[(b * na + i) * 3 + k] += d;
            gt[(b * nb + j) * 3 + k] -= d;
          }
        }
        for (std::size_t j = 0; j < nb; ++j) {
          const std::size_t i = (*nn_ba)[b * nb + j];
          for (std::size_t k = 0; k < 3; ++k) {
            const double d = 2.0 * (q[3 * j + k] - p[3 * i + k]) * g / static_cast<double>(nb);
            gt[(b * nb + j) * 3 + k] += d;
            gp[(b * na + i) * 3 + k] -= d;
          }
        }
      }
      if (np->requires_grad) {
        auto& dst = np->ensure_grad();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gp[i];
      }
      if (nt->requires_grad) {
        auto& dst = nt->ensure_grad();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gt[i];
      }
    };
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || logits.dim(0) == 0) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " with " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t q = logits.dim(0), c = logits.dim(1);
  auto probs = std::make_shared<std::vector<double>>(q * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    if (labels[i] >= c) throw std::invalid_argument("cross_entropy: label out of range");
    const double* row = logits.data().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += ((*probs)[i * c + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] /= z;
    loss -= row[labels[i]] - mx - std::log(z);
  }
  Tensor out = record("cross_entropy", {}, {loss / static_cast<double>(q)}, {&logits});
  if (out.requires_grad()) {
    Node* o = out.node();
    Node* nl = logits.node();
    std::vector<std::size_t> lab(labels.begin(), labels.end());
    o->backward = [o, nl, probs, lab, q, c] {
      auto& gl = nl->ensure_grad();
      const double g = o->grad[0] / static_cast<double>(q);
      for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = 0; j < c; ++j) {
          gl[i * c + j] += g * ((*probs)[i * c + j] - (j == lab[i] ? 1.0 : 0.0));
        }
    };
  }
  return out;
}

// ---- backward -------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  }
  if (!loss.requires_grad()) throw std::logic_error("backward: loss has no recorded tape");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward();
  }
  for (Node* n : order) {
    n->backward = nullptr;
    n->inputs.clear();
  }
}

}  // namespace plainpt
