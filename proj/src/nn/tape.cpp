#include "windgen/nn/tape.hpp"

#include <cmath>
#include <memory>

#include <Eigen/Dense>

#include "windgen/error.hpp"

namespace windgen::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<RowMat>;
using CMapR = Eigen::Map<const RowMat>;
using Buffer = std::shared_ptr<std::vector<double>>;

Eigen::Index ei(std::size_t n) { return static_cast<Eigen::Index>(n); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw InputError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* arg) {
  if (t.rank() != rank)
    throw InputError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) +
                     ", got " + shape_string(t.shape()));
}

Tape& tape_of(std::initializer_list<Var> vars) {
  Tape* t = nullptr;
  for (const auto& v : vars) {
    if (!v.tape) throw InputError("variable is not attached to a tape");
    if (t && t != v.tape) throw InputError("variables belong to different tapes");
    t = v.tape;
  }
  return *t;
}

}  // namespace

const Tensor& Var::value() const {
  if (!tape) throw InputError("variable is not attached to a tape");
  return tape->value(*this);
}

void Tape::check(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw InputError("variable does not belong to this tape");
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, recording_, {}});
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id].value;
}

Tensor& Tape::grad_at(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty() && !node.value.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

const Tensor& Tape::grad(Var v) {
  check(v);
  return grad_at(v.id);
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const auto& in : inputs) {
    check(in);
    needs = needs || nodes_[in.id].requires_grad;
  }
  needs = needs && recording_;
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
  return Var{this, nodes_.size() - 1};
}

void Tape::backward(Var loss) {
  check(loss);
  if (!recording_) throw InputError("backward on a tape that does not record gradients");
  auto& root = nodes_[loss.id];
  if (root.value.size() != 1) throw InputError("backward needs a scalar loss");
  if (!root.requires_grad) throw InputError("backward without a recorded forward computation");
  for (auto& n : nodes_) n.grad = Tensor();
  grad_at(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, i);
  }
}

// ---------------------------------------------------------------------------

Var add(Var a, Var b) {
  auto& t = tape_of({a, b});
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    for (Var v : {a, b}) {
      if (!tp.requires_grad(v)) continue;
      auto& gv = tp.grad_at(v.id);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  auto& t = tape_of({a, b});
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape(av, bv, "sub");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    if (tp.requires_grad(a)) {
      auto& ga = tp.grad_at(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(b)) {
      auto& gb = tp.grad_at(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  auto& t = tape_of({a, b});
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return t.push(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    const auto& av = tp.value(a);
    const auto& bv = tp.value(b);
    if (tp.requires_grad(a)) {
      auto& ga = tp.grad_at(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(b)) {
      auto& gb = tp.grad_at(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  auto& t = tape_of({a});
  const auto& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return t.push(std::move(out), {a}, [a, factor](Tape& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    auto& ga = tp.grad_at(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Var sum(Var a) {
  auto& t = tape_of({a});
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  return t.push(Tensor::scalar(s), {a}, [a](Tape& tp, std::size_t self) {
    const double g = tp.upstream(self)[0];
    auto& ga = tp.grad_at(a.id);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var silu(Var a) {
  auto& t = tape_of({a});
  const auto& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] / (1.0 + std::exp(-av[i]));
  return t.push(std::move(out), {a}, [a](Tape& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    const auto& av = tp.value(a);
    auto& ga = tp.grad_at(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-av[i]));
      ga[i] += g[i] * s * (1.0 + av[i] * (1.0 - s));
    }
  });
}

Var linear(Var x, Var weight, Var bias) {
  auto& t = tape_of({x, weight, bias});
  const auto& xv = x.value();
  const auto& wv = weight.value();
  const auto& bv = bias.value();
  require_rank(xv, 2, "linear", "x");
  require_rank(wv, 2, "linear", "weight");
  const std::size_t batch = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
  if (wv.dim(1) != in || bv.size() != out_dim)
    throw InputError("linear: incompatible shapes x" + shape_string(xv.shape()) + " weight" +
                     shape_string(wv.shape()) + " bias" + shape_string(bv.shape()));
  Tensor out({batch, out_dim});
  MapR o(out.data(), ei(batch), ei(out_dim));
  o.noalias() = CMapR(xv.data(), ei(batch), ei(in)) * CMapR(wv.data(), ei(out_dim), ei(in)).transpose();
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t c = 0; c < out_dim; ++c) out[r * out_dim + c] += bv[c];
  return t.push(std::move(out), {x, weight, bias}, [=](Tape& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    CMapR gm(g.data(), ei(batch), ei(out_dim));
    if (tp.requires_grad(x)) {
      auto& gx = tp.grad_at(x.id);
      MapR(gx.data(), ei(batch), ei(in)).noalias() +=
          gm * CMapR(tp.value(weight).data(), ei(out_dim), ei(in));
    }
    if (tp.requires_grad(weight)) {
      auto& gw = tp.grad_at(weight.id);
      MapR(gw.data(), ei(out_dim), ei(in)).noalias() +=
          gm.transpose() * CMapR(tp.value(x).data(), ei(batch), ei(in));
    }
    if (tp.requires_grad(bias)) {
      auto& gb = tp.grad_at(bias.id);
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < out_dim; ++c) gb[c] += g[r * out_dim + c];
    }
  });
}

Var embedding(Var table, std::span<const int> indices) {
  auto& t = tape_of({table});
  const auto& tv = table.value();
  require_rank(tv, 2, "embedding", "table");
  const std::size_t classes = tv.dim(0), width = tv.dim(1);
  std::vector<int> idx(indices.begin(), indices.end());
  Tensor out({idx.size(), width});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= classes)
      throw InputError("embedding index " + std::to_string(idx[r]) + " outside [0, " +
                       std::to_string(classes) + ")");
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[r]) * width, width, out.data() + r * width);
  }
  return t.push(std::move(out), {table}, [table, idx, width](Tape& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    auto& gt = tp.grad_at(table.id);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < width; ++c)
        gt[static_cast<std::size_t>(idx[r]) * width + c] += g[r * width + c];
  });
}

Var conv1d(Var x, Var weight, Var bias) {
  auto& t = tape_of({x, weight, bias});
  const auto& xv = x.value();
  const auto& wv = weight.value();
  require_rank(xv, 3, "conv1d", "x");
  require_rank(wv, 3, "conv1d", "weight");
  const std::size_t batch = xv.dim(0), cin = xv.dim(1), len = xv.dim(2);
  const std::size_t cout = wv.dim(0), ksize = wv.dim(2);
  if (wv.dim(1) != cin || bias.value().size() != cout || ksize % 2 == 0)
    throw InputError("conv1d: incompatible shapes x" + shape_string(xv.shape()) + " weight" +
                     shape_string(wv.shape()));
  const auto pad = static_cast<std::ptrdiff_t>(ksize / 2);
  const std::size_t rows = cin * ksize, ncols = batch * len;

  auto cols = std::make_shared<std::vector<double>>(rows * ncols, 0.0);
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t k = 0; k < ksize; ++k) {
      double* dst = cols->data() + (ci * ksize + k) * ncols;
      const auto shift = static_cast<std::ptrdiff_t>(k) - pad;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* src = xv.data() + (b * cin + ci) * len;
        for (std::size_t l = 0; l < len; ++l) {
          const auto pos = static_cast<std::ptrdiff_t>(l) + shift;
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) dst[b * len + l] = src[pos];
        }
      }
    }

  RowMat om = CMapR(wv.data(), ei(cout), ei(rows)) * CMapR(cols->data(), ei(rows), ei(ncols));
  Tensor out({batch, cout, len});
  const auto& bv = bias.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t co = 0; co < cout; ++co) {
      double* dst = out.data() + (b * cout + co) * len;
      const double* src = om.data() + co * ncols + b * len;
      for (std::size_t l = 0; l < len; ++l) dst[l] = src[l] + bv[co];
    }

  return t.push(std::move(out), {x, weight, bias}, [=](Tape& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    RowMat gm(ei(cout), ei(ncols));
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t co = 0; co < cout; ++co)
        std::copy_n(g.data() + (b * cout + co) * len, len, gm.data() + co * ncols + b * len);
    if (tp.requires_grad(weight)) {
      auto& gw = tp.grad_at(weight.id);
      MapR(gw.data(), ei(cout), ei(rows)).noalias() +=
          gm * CMapR(cols->data(), ei(rows), ei(ncols)).transpose();
    }
    if (tp.requires_grad(bias)) {
      auto& gb = tp.grad_at(bias.id);
      for (std::size_t co = 0; co < cout; ++co) gb[co] += gm.row(ei(co)).sum();
    }
    if (tp.requires_grad(x)) {
      RowMat gcols = CMapR(tp.value(weight).data(), ei(cout), ei(rows)).transpose() * gm;
      auto& gx = tp.grad_at(x.id);
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t k = 0; k < ksize; ++k) {
          const double* src = gcols.data() + (ci * ksize + k) * ncols;
          const auto shift = static_cast<std::ptrdiff_t>(k) - pad;
          for (std::size_t b = 0; b < batch; ++b) {
            double* dst = gx.data() + (b * cin + ci) * len;
            for (std::size_t l = 0; l < len; ++l) {
              const auto pos = static_cast<std::ptrdiff_t>(l) + shift;
              if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) dst[pos] += src[b * len + l];
            }
          }
        }
    }
  });
}

Var group_norm(Var x, Var gamma, Var beta, std::size_t groups, double eps) {
  auto& t = tape_of({x, gamma, beta});
  const auto& xv = x.value();
  require_rank(xv, 3, "group_norm", "x");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), len = xv.dim(2);
  if (groups == 0 || ch % groups != 0)
    throw InputError("group_norm: " + std::to_string(ch) + " channels not divisible by " +
                     std::to_string(groups) + " groups");
  if (gamma.value().size() != ch || beta.value().size() != ch)
    throw InputError("group_norm: gamma/beta must have one entry per channel");
  const std::size_t per_group = ch / groups, count = per_group * len;

  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto rstd = std::make_shared<std::vector<double>>(batch * groups);
  Tensor out(xv.shape());
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t off = (b * ch + g * per_group) * len;
      double mean = 0.0;
      for (std::size_t i = 0; i < count; ++i) mean += xv[off + i];
      mean /= static_cast<double>(count);
      double var = 0.0;
      for (std::size_t i = 0; i < count; ++i) var += (xv[off + i] - mean) * (xv[off + i] - mean);
      var /= static_cast<double>(count);
      const double r = 1.0 / std::sqrt(var + eps);
      (*rstd)[b * groups + g] = r;
      for (std::size_t j = 0; j < per_group; ++j) {
        const std::size_t c = g * per_group + j;
        const std::size_t row = off + j * len;
        for (std::size_t l = 0; l < len; ++l) {
          const double h = (xv[row + l] - mean) * r;
          (*xhat)[row + l] = h;
          out[row + l] = h * gv[c] + bv[c];
        }
      }
    }

  return t.push(std::move(out), {x, gamma, beta}, [=](Tape& tp, std::size_t self) {
    const auto& gout = tp.upstream(self);
    const auto& gv = tp.value(gamma);
    if (tp.requires_grad(gamma) || tp.requires_grad(beta)) {
      auto& gg = tp.grad_at(gamma.id);
      auto& gb = tp.grad_at(beta.id);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < ch; ++c) {
          const std::size_t off = (b * ch + c) * len;
          for (std::size_t l = 0; l < len; ++l) {
            gg[c] += gout[off + l] * (*xhat)[off + l];
            gb[c] += gout[off + l];
          }
        }
    }
    if (tp.requires_grad(x)) {
      auto& gx = tp.grad_at(x.id);
      const auto n = static_cast<double>(count);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t g = 0; g < groups; ++g) {
          const std::size_t off = (b * ch + g * per_group) * len;
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < per_group; ++j) {
            const double gam = gv[g * per_group + j];
            const std::size_t row = off + j * len;
            for (std::size_t l = 0; l < len; ++l) {
              const double d = gout[row + l] * gam;
              mean_d += d;
              mean_dx += d * (*xhat)[row + l];
            }
          }
          mean_d /= n;
          mean_dx /= n;
          const double r = (*rstd)[b * groups + g];
          for (std::size_t j = 0; j < per_group; ++j) {
            const double gam = gv[g * per_group + j];
            const std::size_t row = off + j * len;
            for (std::size_t l = 0; l < len; ++l)
              gx[row + l] += r * (gout[row + l] * gam - mean_d - (*xhat)[row + l] * mean_dx);
          }
        }
    }
  });
}

Var add_channel_bias(Var x, Var bias) {
  auto& t = tape_of({x, bias});
  const auto& xv = x.value();
  const auto& bv = bias.value();
  require_rank(xv, 3, "add_channel_bias", "x");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), len = xv.dim(2);
  if (bv.size() != batch * ch)
    throw InputError("add_channel_bias: bias " + shape_string(bv.shape()) + " does not match x" +
                     shape_string(xv.shape()));
  Tensor out(xv.shape());
  for (std::size_t bc = 0; bc < batch * ch; ++bc)
    for (std::size_t l = 0; l < len; ++l) out[bc * len + l] = xv[bc * len + l] + bv[bc];
  return t.push(std::move(out), {x, bias}, [=](Tape& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    if (tp.requires_grad(x)) {
      auto& gx = tp.grad_at(x.id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (tp.requires_grad(bias)) {
      auto& gb = tp.grad_at(bias.id);
      for (std::size_t bc = 0; bc < batch * ch; ++bc)
        for (std::size_t l = 0; l < len; ++l) gb[bc] += g[bc * len + l];
    }
  });
}

Var avg_pool2(Var x) {
  auto& t = tape_of({x});
  const auto& xv = x.value();
  require_rank(xv, 3, "avg_pool2", "x");
  const std::size_t rows = xv.dim(0) * xv.dim(1), len = xv.dim(2);
  if (len % 2 != 0) throw InputError("avg_pool2: length " + std::to_string(len) + " is odd");
  const std::size_t half = len / 2;
  Tensor out({xv.dim(0), xv.dim(1), half});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t l = 0; l < half; ++l)
      out[r * half + l] = 0.5 * (xv[r * len + 2 * l] + xv[r * len + 2 * l + 1]);
  return t.push(std::move(out), {x}, [=](Tape& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    auto& gx = tp.grad_at(x.id);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t l = 0; l < half; ++l) {
        gx[r * len + 2 * l] += 0.5 * g[r * half + l];
        gx[r * len + 2 * l + 1] += 0.5 * g[r * half + l];
      }
  });
}

Var upsample2(Var x) {
  auto& t = tape_of({x});
  const auto& xv = x.value();
  require_rank(xv, 3, "upsample2", "x");
  const std::size_t rows = xv.dim(0) * xv.dim(1), len = xv.dim(2);
  Tensor out({xv.dim(0), xv.dim(1), 2 * len});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t l = 0; l < len; ++l)
      out[r * 2 * len + 2 * l] = out[r * 2 * len + 2 * l + 1] = xv[r * len + l];
  return t.push(std::move(out), {x}, [=](Tape& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    auto& gx = tp.grad_at(x.id);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t l = 0; l < len; ++l)
        gx[r * len + l] += g[r * 2 * len + 2 * l] + g[r * 2 * len + 2 * l + 1];
  });
}

Var concat_channels(Var a, Var b) {
  auto& t = tape_of({a, b});
  const auto& av = a.value();
  const auto& bv = b.value();
  require_rank(av, 3, "concat_channels", "a");
  require_rank(bv, 3, "concat_channels", "b");
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2))
    throw InputError("concat_channels: shape mismatch " + shape_string(av.shape()) + " vs " +
                     shape_string(bv.shape()));
  const std::size_t batch = av.dim(0), ca = av.dim(1), cb = bv.dim(1), len = av.dim(2);
  Tensor out({batch, ca + cb, len});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy_n(av.data() + n * ca * len, ca * len, out.data() + n * (ca + cb) * len);
    std::copy_n(bv.data() + n * cb * len, cb * len, out.data() + (n * (ca + cb) + ca) * len);
  }
  return t.push(std::move(out), {a, b}, [=](Tape& tp, std::size_t self) {
    const auto& g = tp.upstream(self);
    if (tp.requires_grad(a)) {
      auto& ga = tp.grad_at(a.id);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < ca * len; ++i) ga[n * ca * len + i] += g[n * (ca + cb) * len + i];
    }
    if (tp.requires_grad(b)) {
      auto& gb = tp.grad_at(b.id);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < cb * len; ++i)
          gb[n * cb * len + i] += g[(n * (ca + cb) + ca) * len + i];
    }
  });
}

Var masked_mse(Var pred, Var target, std::span<const double> mask) {
  auto& t = tape_of({pred, target});
  const auto& pv = pred.value();
  const auto& tv = target.value();
  require_same_shape(pv, tv, "masked_mse");
  require_rank(pv, 3, "masked_mse", "pred");
  const std::size_t rows = pv.dim(0) * pv.dim(1), len = pv.dim(2);
  if (mask.size() != len) throw InputError("masked_mse: mask length does not match");
  std::vector<double> m(mask.begin(), mask.end());
  double active = 0.0;
  for (double w : m) active += w;
  if (!(active > 0)) throw InputError("masked_mse: mask selects no positions");
  const double denom = active * static_cast<double>(rows);
  double acc = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t l = 0; l < len; ++l) {
      const double d = pv[r * len + l] - tv[r * len + l];
      acc += m[l] * d * d;
    }
  return t.push(Tensor::scalar(acc / denom), {pred, target}, [=](Tape& tp, std::size_t self) {
    const double g = tp.upstream(self)[0];
    const auto& pv = tp.value(pred);
    const auto& tv = tp.value(target);
    const bool gp = tp.requires_grad(pred), gt = tp.requires_grad(target);
    Tensor* dp = gp ? &tp.grad_at(pred.id) : nullptr;
    Tensor* dt = gt ? &tp.grad_at(target.id) : nullptr;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t i = r * len + l;
        const double d = 2.0 * g * m[l] * (pv[i] - tv[i]) / denom;
        if (dp) (*dp)[i] += d;
        if (dt) (*dt)[i] -= d;
      }
  });
}

}  // namespace windgen::nn
