#include "kwscl/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>

#include "kwscl/common.hpp"

namespace kwscl::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<const Tensor*> inputs,
                   std::function<void(detail::Node&)> bw, const char* op) {
  check_finite(data, op);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  for (const Tensor* in : inputs) {
    if (in->defined() && in->requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const Tensor* in : inputs) {
      if (in->defined()) node->parents.push_back(in->node());
    }
    node->backward = std::move(bw);
  }
  return Tensor::from_node(std::move(node));
}

// Parent i of a result node, or nullptr when it takes no gradient.
detail::Node* grad_target(detail::Node& self, std::size_t i) {
  if (i >= self.parents.size()) return nullptr;
  detail::Node* p = self.parents[i].get();
  return p->requires_grad ? p : nullptr;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (!t.defined() || t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     (t.defined() ? ", got shape " + shape_string(t.shape()) : ", got undefined tensor"));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t padding) {
  require_rank(x, 3, "conv1d", "input");
  require_rank(weight, 3, "conv1d", "weight");
  const std::size_t n = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin) {
    throw ShapeError("conv1d: weight expects " + std::to_string(weight.dim(1)) + " input channels, input has " +
                     std::to_string(cin));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw ShapeError("conv1d: bias shape " + shape_string(bias.shape()) + " does not match " + std::to_string(cout) +
                     " output channels");
  }
  if (stride == 0) throw ShapeError("conv1d: stride must be positive");
  if (len + 2 * padding < k) throw ShapeError("conv1d: kernel longer than padded input");
  const std::size_t lout = (len + 2 * padding - k) / stride + 1;
  const std::size_t rows = cin * k;

  // One im2col matrix per sample: row (c, j) holds x[c, t*stride + j - padding].
  auto cols = std::make_shared<std::vector<double>>(n * rows * lout, 0.0);
  const auto xd = x.data();
  for (std::size_t s = 0; s < n; ++s) {
    double* col = cols->data() + s * rows * lout;
    for (std::size_t c = 0; c < cin; ++c) {
      const double* xs = xd.data() + (s * cin + c) * len;
      for (std::size_t j = 0; j < k; ++j) {
        double* row = col + (c * k + j) * lout;
        for (std::size_t t = 0; t < lout; ++t) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + j) - static_cast<std::ptrdiff_t>(padding);
          if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) row[t] = xs[src];
        }
      }
    }
  }

  std::vector<double> out(n * cout * lout);
  ConstRowMap w(weight.data().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(rows));
  for (std::size_t s = 0; s < n; ++s) {
    ConstRowMap col(cols->data() + s * rows * lout, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(lout));
    RowMap y(out.data() + s * cout * lout, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(lout));
    y.noalias() = w * col;
    if (bias.defined()) {
      const auto b = bias.data();
      for (std::size_t o = 0; o < cout; ++o) y.row(static_cast<Eigen::Index>(o)).array() += b[o];
    }
  }

  auto bw = [=](detail::Node& self) {
    detail::Node* gx = grad_target(self, 0);
    detail::Node* gw = grad_target(self, 1);
    detail::Node* gb = grad_target(self, 2);
    const detail::Node& wnode = *self.parents[1];
    ConstRowMap wm(wnode.data.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(rows));
    std::vector<double> dcol(gx ? rows * lout : 0);
    for (std::size_t s = 0; s < n; ++s) {
      ConstRowMap dy(self.grad.data() + s * cout * lout, static_cast<Eigen::Index>(cout),
                     static_cast<Eigen::Index>(lout));
      ConstRowMap col(cols->data() + s * rows * lout, static_cast<Eigen::Index>(rows),
                      static_cast<Eigen::Index>(lout));
      if (gw) {
        RowMap dw(gw->ensure_grad().data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(rows));
        dw.noalias() += dy * col.transpose();
      }
      if (gb) {
        auto& db = gb->ensure_grad();
        for (std::size_t o = 0; o < cout; ++o) db[o] += dy.row(static_cast<Eigen::Index>(o)).sum();
      }
      if (gx) {
        RowMap dc(dcol.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(lout));
        dc.noalias() = wm.transpose() * dy;
        auto& dx = gx->ensure_grad();
        for (std::size_t c = 0; c < cin; ++c) {
          double* dxs = dx.data() + (s * cin + c) * len;
          for (std::size_t j = 0; j < k; ++j) {
            const double* row = dcol.data() + (c * k + j) * lout;
            for (std::size_t t = 0; t < lout; ++t) {
              const std::ptrdiff_t src =
                  static_cast<std::ptrdiff_t>(t * stride + j) - static_cast<std::ptrdiff_t>(padding);
              if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) dxs[src] += row[t];
            }
          }
        }
      }
    }
  };
  return make_result({n, cout, lout}, std::move(out), {&x, &weight, &bias}, bw, "conv1d");
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, Mode mode, const BatchNormOptions& opts) {
  if (!x.defined() || (x.rank() != 2 && x.rank() != 3)) throw ShapeError("batch_norm: input must be [N, C] or [N, C, L]");
  const std::size_t n = x.dim(0), ch = x.dim(1), len = x.rank() == 3 ? x.dim(2) : 1;
  for (const Tensor* t : {&gamma, &beta, static_cast<const Tensor*>(&running_mean), static_cast<const Tensor*>(&running_var)}) {
    if (!t->defined() || t->rank() != 1 || t->dim(0) != ch) {
      throw ShapeError("batch_norm: per-channel tensors must have shape (" + std::to_string(ch) + ")");
    }
  }
  const std::size_t count = n * len;
  const auto xd = x.data();
  const auto g = gamma.data();
  const auto b = beta.data();

  auto xhat = std::make_shared<std::vector<double>>(xd.size());
  auto inv_std = std::make_shared<std::vector<double>>(ch);
  std::vector<double> out(xd.size());

  for (std::size_t c = 0; c < ch; ++c) {
    double mean, var;
    if (mode.training) {
      if (count < 2) throw ShapeError("batch_norm: training needs more than one value per channel");
      double acc = 0.0;
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = 0; t < len; ++t) acc += xd[(s * ch + c) * len + t];
      mean = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = 0; t < len; ++t) {
          const double d = xd[(s * ch + c) * len + t] - mean;
          sq += d * d;
        }
      var = sq / static_cast<double>(count);
      if (mode.update_stats) {
        auto rm = running_mean.data();
        auto rv = running_var.data();
        rm[c] = (1.0 - opts.momentum) * rm[c] + opts.momentum * mean;
        rv[c] = (1.0 - opts.momentum) * rv[c] + opts.momentum * sq / static_cast<double>(count - 1);
      }
    } else {
      mean = running_mean.data()[c];
      var = running_var.data()[c];
    }
    const double is = 1.0 / std::sqrt(var + opts.eps);
    (*inv_std)[c] = is;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t i = (s * ch + c) * len + t;
        (*xhat)[i] = (xd[i] - mean) * is;
        out[i] = g[c] * (*xhat)[i] + b[c];
      }
  }

  const bool training = mode.training;
  auto bw = [=](detail::Node& self) {
    detail::Node* gx = grad_target(self, 0);
    detail::Node* gg = grad_target(self, 1);
    detail::Node* gbeta = grad_target(self, 2);
    const auto& gam = self.parents[1]->data;
    const auto& dy = self.grad;
    for (std::size_t c = 0; c < ch; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = 0; t < len; ++t) {
          const std::size_t i = (s * ch + c) * len + t;
          sum_dy += dy[i];
          sum_dy_xhat += dy[i] * (*xhat)[i];
        }
      if (gg) gg->ensure_grad()[c] += sum_dy_xhat;
      if (gbeta) gbeta->ensure_grad()[c] += sum_dy;
      if (!gx) continue;
      auto& dx = gx->ensure_grad();
      const double k = gam[c] * (*inv_std)[c];
      const double m = static_cast<double>(count);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t t = 0; t < len; ++t) {
          const std::size_t i = (s * ch + c) * len + t;
          if (training) {
            dx[i] += k * (dy[i] - sum_dy / m - (*xhat)[i] * sum_dy_xhat / m);
          } else {
            dx[i] += k * dy[i];
          }
        }
    }
  };
  return make_result(x.shape(), std::move(out), {&x, &gamma, &beta}, bw, "batch_norm");
}

Tensor relu(const Tensor& x) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  auto bw = [](detail::Node& self) {
    detail::Node* gx = grad_target(self, 0);
    if (!gx) return;
    auto& dx = gx->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (self.data[i] > 0.0) dx[i] += self.grad[i];
    }
  };
  return make_result(x.shape(), std::move(out), {&x}, bw, "relu");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  auto bw = [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (detail::Node* g = grad_target(self, p)) {
        auto& d = g->ensure_grad();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
      }
    }
  };
  return make_result(a.shape(), std::move(out), {&a, &b}, bw, "add");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  auto bw = [](detail::Node& self) {
    const auto& av = self.parents[0]->data;
    const auto& bv = self.parents[1]->data;
    if (detail::Node* g = grad_target(self, 0)) {
      auto& d = g->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * bv[i];
    }
    if (detail::Node* g = grad_target(self, 1)) {
      auto& d = g->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * av[i];
    }
  };
  return make_result(a.shape(), std::move(out), {&a, &b}, bw, "mul");
}

Tensor scale(const Tensor& x, double factor) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * xd[i];
  auto bw = [factor](detail::Node& self) {
    if (detail::Node* g = grad_target(self, 0)) {
      auto& d = g->ensure_grad();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * self.grad[i];
    }
  };
  return make_result(x.shape(), std::move(out), {&x}, bw, "scale");
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  auto bw = [](detail::Node& self) {
    if (detail::Node* g = grad_target(self, 0)) {
      auto& d = g->ensure_grad();
      for (double& v : d) v += self.grad[0];
    }
  };
  return make_result({}, {acc}, {&x}, bw, "sum");
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank(x, 3, "global_avg_pool", "input");
  const std::size_t n = x.dim(0), ch = x.dim(1), len = x.dim(2);
  if (len == 0) throw ShapeError("global_avg_pool: empty time axis");
  const auto xd = x.data();
  std::vector<double> out(n * ch);
  for (std::size_t i = 0; i < n * ch; ++i) {
    double acc = 0.0;
    for (std::size_t t = 0; t < len; ++t) acc += xd[i * len + t];
    out[i] = acc / static_cast<double>(len);
  }
  auto bw = [n, ch, len](detail::Node& self) {
    detail::Node* gx = grad_target(self, 0);
    if (!gx) return;
    auto& dx = gx->ensure_grad();
    const double inv = 1.0 / static_cast<double>(len);
    for (std::size_t i = 0; i < n * ch; ++i)
      for (std::size_t t = 0; t < len; ++t) dx[i * len + t] += self.grad[i] * inv;
  };
  return make_result({n, ch}, std::move(out), {&x}, bw, "global_avg_pool");
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "dense", "input");
  require_rank(weight, 2, "dense", "weight");
  const std::size_t n = x.dim(0), in = x.dim(1), outd = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("dense: weight expects " + std::to_string(weight.dim(1)) + " inputs, got " + std::to_string(in));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outd)) {
    throw ShapeError("dense: bias shape " + shape_string(bias.shape()) + " does not match " + std::to_string(outd));
  }
  std::vector<double> out(n * outd);
  ConstRowMap xm(x.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
  ConstRowMap wm(weight.data().data(), static_cast<Eigen::Index>(outd), static_cast<Eigen::Index>(in));
  RowMap ym(out.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(outd));
  ym.noalias() = xm * wm.transpose();
  if (bias.defined()) {
    const auto b = bias.data();
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t o = 0; o < outd; ++o) out[s * outd + o] += b[o];
  }
  auto bw = [n, in, outd](detail::Node& self) {
    ConstRowMap dy(self.grad.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(outd));
    if (detail::Node* gx = grad_target(self, 0)) {
      ConstRowMap wv(self.parents[1]->data.data(), static_cast<Eigen::Index>(outd), static_cast<Eigen::Index>(in));
      RowMap dx(gx->ensure_grad().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
      dx.noalias() += dy * wv;
    }
    if (detail::Node* gw = grad_target(self, 1)) {
      ConstRowMap xv(self.parents[0]->data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
      RowMap dw(gw->ensure_grad().data(), static_cast<Eigen::Index>(outd), static_cast<Eigen::Index>(in));
      dw.noalias() += dy.transpose() * xv;
    }
    if (detail::Node* gb = grad_target(self, 2)) {
      auto& db = gb->ensure_grad();
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t o = 0; o < outd; ++o) db[o] += self.grad[s * outd + o];
    }
  };
  return make_result({n, outd}, std::move(out), {&x, &weight, &bias}, bw, "dense");
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, std::span<const ClassRange> ranges) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw ShapeError("softmax_cross_entropy: label count does not match batch size");
  if (!ranges.empty() && ranges.size() != n) throw ShapeError("softmax_cross_entropy: range count does not match batch");
  if (n == 0) throw ShapeError("softmax_cross_entropy: empty batch");

  const auto z = logits.data();
  auto probs = std::make_shared<std::vector<double>>(n * k, 0.0);
  auto spans = std::make_shared<std::vector<ClassRange>>(n);
  auto targets = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const ClassRange r = ranges.empty() ? ClassRange{0, static_cast<int>(k)} : ranges[s];
    if (r.begin < 0 || r.end > static_cast<int>(k) || r.begin >= r.end) {
      throw ShapeError("softmax_cross_entropy: invalid class range for sample " + std::to_string(s));
    }
    if (labels[s] < r.begin || labels[s] >= r.end) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(labels[s]) + " outside class range");
    }
    (*spans)[s] = r;
    const double* row = z.data() + s * k;
    double mx = row[r.begin];
    for (int c = r.begin; c < r.end; ++c) mx = std::max(mx, row[c]);
    double denom = 0.0;
    for (int c = r.begin; c < r.end; ++c) denom += std::exp(row[c] - mx);
    for (int c = r.begin; c < r.end; ++c) (*probs)[s * k + c] = std::exp(row[c] - mx) / denom;
    total += mx + std::log(denom) - row[labels[s]];
  }
  auto bw = [=](detail::Node& self) {
    detail::Node* gz = grad_target(self, 0);
    if (!gz) return;
    auto& dz = gz->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(n);
    for (std::size_t s = 0; s < n; ++s) {
      const ClassRange r = (*spans)[s];
      for (int c = r.begin; c < r.end; ++c) {
        const double onehot = c == (*targets)[s] ? 1.0 : 0.0;
        dz[s * k + c] += g * ((*probs)[s * k + c] - onehot);
      }
    }
  };
  return make_result({}, {total / static_cast<double>(n)}, {&logits}, bw, "softmax_cross_entropy");
}

}  // namespace kwscl::ad
