#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "windgen/nn/tensor.hpp"

namespace windgen::nn {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode recorder. Every op appends a node holding its output and a
/// closure that propagates the node's gradient to its inputs. A tape built
/// with record_gradients=false keeps values only.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient during backward().
  Var variable(Tensor value);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() loss; zeros if the node was not reached.
  const Tensor& grad(Var v);

  /// `loss` must be a one-element node recorded on this tape.
  void backward(Var loss);

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Op-author interface.
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id); }
  Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  const Tensor& value_at(std::size_t id) const { return nodes_[id].value; }
  /// Gradient buffer of node `id`, zero-allocated on first use.
  Tensor& grad_at(std::size_t id);
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  void check(Var v) const;

  std::vector<Node> nodes_;
  bool recording_;
};

// Elementwise and reductions.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
Var silu(Var a);

/// x [B, in], weight [out, in], bias [out] -> [B, out].
Var linear(Var x, Var weight, Var bias);
/// Rows of table [classes, D] selected by indices -> [B, D].
Var embedding(Var table, std::span<const int> indices);

/// Same-length convolution with zero padding. x [B, Ci, L], weight [Co, Ci, K]
/// with K odd, bias [Co] -> [B, Co, L].
Var conv1d(Var x, Var weight, Var bias);
/// Normalizes each (sample, group) over its channels and positions, then
/// applies per-channel gamma/beta. x [B, C, L], C divisible by groups.
Var group_norm(Var x, Var gamma, Var beta, std::size_t groups, double eps = 1e-5);
/// x [B, C, L] + bias [B, C] broadcast along L.
Var add_channel_bias(Var x, Var bias);
/// Mean of adjacent pairs along L; L must be even.
Var avg_pool2(Var x);
/// Nearest-neighbor doubling along L.
Var upsample2(Var x);
/// [B, Ca, L] ++ [B, Cb, L] -> [B, Ca + Cb, L].
Var concat_channels(Var a, Var b);

/// Mean over B x C x (positions with mask 1) of (pred - target)^2.
/// pred [B, C, L]; target has the same shape; mask has length L.
Var masked_mse(Var pred, Var target, std::span<const double> mask);

}  // namespace windgen::nn
