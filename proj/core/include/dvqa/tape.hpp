#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dvqa/tensor.hpp"

namespace dvqa::ad {

using NodeId = int;

enum class Op : std::uint8_t {
  Input,
  Param,
  Const,
  Add,
  Sub,
  Mul,
  Scale,          // y = rattr[0] * x
  AddScalarNode,  // y = x + s, s a rank-0 node
  MulScalarNode,  // y = x * s
  MatMul,
  Transpose2D,
  Relu,
  Tanh,
  Log,
  Exp,
  Sqrt,
  Reciprocal,
  ClampMin,  // y = max(x, rattr[0])
  SoftmaxRows,
  LogSoftmaxRows,
  RowMax,  // [r,c] -> [r]; ties resolve to the lowest column index
  SumAll,
  MeanAll,
  SumAxis,        // iattr[0] = axis, keeps the axis with extent 1
  MeanAxis,
  BroadcastAxis,  // iattr[0] = axis, iattr[1] = new extent; requires extent 1
  Slice,          // iattr = start0,size0,start1,size1,...
  Concat,         // iattr[0] = axis
  Reshape,
  BilinearResize,  // iattr = out_h, out_w; rank-3 H,W,C; half-pixel centers
  Patchify,        // iattr[0] = P; [H,W,C] -> [(H/P)*(W/P), P*P*C]
  MaskAssign,      // inputs: base, values; iattr[0] = const pool index of 0/1 mask
  ChannelAffine,   // rank-3; rattr = scale[0..C), shift[0..C)
};

const char* op_name(Op op);

struct Node {
  Op op;
  Shape shape;
  std::vector<NodeId> inputs;
  std::vector<int> iattr;
  std::vector<double> rattr;
  std::string name;  // set for inputs and params
};

// Append-only record of primitive operations. Node inputs always precede the
// node itself, so forward evaluation and reverse sweeps are plain index scans.
// Single-writer while being built; safe to share read-only afterwards.
template <typename Real>
class Tape {
 public:
  NodeId input(Shape shape, std::string name) {
    Node n{Op::Input, std::move(shape), {}, {}, {}, std::move(name)};
    NodeId id = push(std::move(n));
    inputs_.push_back(id);
    return id;
  }

  NodeId param(Shape shape, std::string name) {
    Node n{Op::Param, std::move(shape), {}, {}, {}, std::move(name)};
    NodeId id = push(std::move(n));
    params_.push_back(id);
    return id;
  }

  NodeId constant(Tensor<Real> value, std::string name = "") {
    Node n{Op::Const, value.shape, {}, {static_cast<int>(consts_.size())}, {}, std::move(name)};
    consts_.push_back(std::move(value));
    return push(std::move(n));
  }

  NodeId constant_scalar(Real v) { return constant(Tensor<Real>::scalar(v)); }

  NodeId add(NodeId a, NodeId b) { return elementwise(Op::Add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return elementwise(Op::Sub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return elementwise(Op::Mul, a, b); }

  NodeId scale(NodeId a, double alpha) {
    Node n{Op::Scale, shape_of(a), {a}, {}, {alpha}, {}};
    return push(std::move(n));
  }

  NodeId neg(NodeId a) { return scale(a, -1.0); }

  NodeId add_scalar_node(NodeId x, NodeId s) { return scalar_broadcast(Op::AddScalarNode, x, s); }
  NodeId mul_scalar_node(NodeId x, NodeId s) { return scalar_broadcast(Op::MulScalarNode, x, s); }

  NodeId matmul(NodeId a, NodeId b) {
    const Shape& sa = shape_of(a);
    const Shape& sb = shape_of(b);
    if (sa.size() != 2 || sb.size() != 2)
      fail("matmul", "operands must be rank 2, got " + shape_str(sa) + " and " + shape_str(sb));
    if (sa[1] != sb[0])
      fail("matmul", "inner extents differ: " + shape_str(sa) + " x " + shape_str(sb));
    Node n{Op::MatMul, {sa[0], sb[1]}, {a, b}, {}, {}, {}};
    return push(std::move(n));
  }

  NodeId transpose2d(NodeId a) {
    const Shape& s = require_rank(a, 2, "transpose2d");
    Node n{Op::Transpose2D, {s[1], s[0]}, {a}, {}, {}, {}};
    return push(std::move(n));
  }

  NodeId relu(NodeId a) { return unary(Op::Relu, a); }
  NodeId tanh_(NodeId a) { return unary(Op::Tanh, a); }
  NodeId log_(NodeId a) { return unary(Op::Log, a); }
  NodeId exp_(NodeId a) { return unary(Op::Exp, a); }
  NodeId sqrt_(NodeId a) { return unary(Op::Sqrt, a); }
  NodeId reciprocal(NodeId a) { return unary(Op::Reciprocal, a); }

  NodeId clamp_min(NodeId a, double floor) {
    Node n{Op::ClampMin, shape_of(a), {a}, {}, {floor}, {}};
    return push(std::move(n));
  }

  NodeId softmax_rows(NodeId a) { return rows(Op::SoftmaxRows, a); }
  NodeId log_softmax_rows(NodeId a) { return rows(Op::LogSoftmaxRows, a); }

  NodeId row_max(NodeId a) {
    const Shape& s = require_rank(a, 2, "row_max");
    Node n{Op::RowMax, {s[0]}, {a}, {}, {}, {}};
    return push(std::move(n));
  }

  NodeId sum_all(NodeId a) { return reduce_all(Op::SumAll, a); }
  NodeId mean_all(NodeId a) { return reduce_all(Op::MeanAll, a); }

  NodeId sum_axis(NodeId a, int axis) { return reduce_axis(Op::SumAxis, a, axis); }
  NodeId mean_axis(NodeId a, int axis) { return reduce_axis(Op::MeanAxis, a, axis); }

  NodeId broadcast_axis(NodeId a, int axis, int extent) {
    Shape s = shape_of(a);
    if (axis < 0 || axis >= static_cast<int>(s.size()))
      fail("broadcast_axis", "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    if (s[axis] != 1)
      fail("broadcast_axis", "axis extent must be 1, got " + shape_str(s));
    if (extent <= 0) fail("broadcast_axis", "extent must be positive");
    s[axis] = extent;
    Node n{Op::BroadcastAxis, std::move(s), {a}, {axis, extent}, {}, {}};
    return push(std::move(n));
  }

  NodeId slice(NodeId a, const std::vector<int>& starts, const std::vector<int>& sizes) {
    const Shape& s = shape_of(a);
    if (starts.size() != s.size() || sizes.size() != s.size())
      fail("slice", "starts/sizes rank mismatch for " + shape_str(s));
    Node n{Op::Slice, {}, {a}, {}, {}, {}};
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (starts[d] < 0 || sizes[d] <= 0 || starts[d] + sizes[d] > s[d])
        fail("slice", "range [" + std::to_string(starts[d]) + "," +
                          std::to_string(starts[d] + sizes[d]) + ") out of bounds for " + shape_str(s));
      n.shape.push_back(sizes[d]);
      n.iattr.push_back(starts[d]);
      n.iattr.push_back(sizes[d]);
    }
    return push(std::move(n));
  }

  NodeId concat(int axis, const std::vector<NodeId>& parts) {
    if (parts.empty()) fail("concat", "no inputs");
    Shape s = shape_of(parts[0]);
    if (axis < 0 || axis >= static_cast<int>(s.size()))
      fail("concat", "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    for (std::size_t i = 1; i < parts.size(); ++i) {
      const Shape& si = shape_of(parts[i]);
      if (si.size() != s.size()) fail("concat", "rank mismatch");
      for (std::size_t d = 0; d < s.size(); ++d) {
        if (static_cast<int>(d) == axis) continue;
        if (si[d] != s[d]) fail("concat", "extent mismatch at axis " + std::to_string(d));
      }
      s[axis] += si[axis];
    }
    Node n{Op::Concat, std::move(s), parts, {axis}, {}, {}};
    return push(std::move(n));
  }

  NodeId reshape(NodeId a, Shape shape) {
    if (shape_numel(shape) != shape_numel(shape_of(a)))
      fail("reshape", "numel mismatch: " + shape_str(shape_of(a)) + " -> " + shape_str(shape));
    Node n{Op::Reshape, std::move(shape), {a}, {}, {}, {}};
    return push(std::move(n));
  }

  // Half-pixel center convention: src = (dst + 0.5) * (in / out) - 0.5,
  // clamped to the valid range. Identity extents reproduce the input bitwise.
  NodeId bilinear_resize(NodeId a, int out_h, int out_w) {
    const Shape& s = require_rank(a, 3, "bilinear_resize");
    if (out_h <= 0 || out_w <= 0) fail("bilinear_resize", "output extents must be positive");
    Node n{Op::BilinearResize, {out_h, out_w, s[2]}, {a}, {out_h, out_w}, {}, {}};
    return push(std::move(n));
  }

  NodeId patchify(NodeId a, int patch) {
    const Shape& s = require_rank(a, 3, "patchify");
    if (patch <= 0 || s[0] % patch != 0 || s[1] % patch != 0)
      fail("patchify", "patch " + std::to_string(patch) + " must divide extents " + shape_str(s));
    int rows = (s[0] / patch) * (s[1] / patch);
    Node n{Op::Patchify, {rows, patch * patch * s[2]}, {a}, {patch}, {}, {}};
    return push(std::move(n));
  }

  // y[i] = mask[i] ? values[i] : base[i]. The mask is a constant; gradients
  // w.r.t. base are literal zeros at masked positions.
  NodeId mask_assign(NodeId base, NodeId values, Tensor<Real> mask) {
    const Shape& s = shape_of(base);
    if (shape_of(values) != s || mask.shape != s)
      fail("mask_assign", "base/values/mask shapes must match, base " + shape_str(s));
    int pool = static_cast<int>(consts_.size());
    consts_.push_back(std::move(mask));
    Node n{Op::MaskAssign, s, {base, values}, {pool}, {}, {}};
    return push(std::move(n));
  }

  // y[h,w,c] = x[h,w,c] * scale[c] + shift[c]
  NodeId channel_affine(NodeId a, const std::vector<double>& scale_c, const std::vector<double>& shift_c) {
    const Shape& s = require_rank(a, 3, "channel_affine");
    if (static_cast<int>(scale_c.size()) != s[2] || static_cast<int>(shift_c.size()) != s[2])
      fail("channel_affine", "per-channel attr length must equal " + std::to_string(s[2]));
    Node n{Op::ChannelAffine, s, {a}, {}, {}, {}};
    n.rattr = scale_c;
    n.rattr.insert(n.rattr.end(), shift_c.begin(), shift_c.end());
    return push(std::move(n));
  }

  const Node& node(NodeId id) const { return nodes_[check_id(id)]; }
  int size() const { return static_cast<int>(nodes_.size()); }
  const Shape& shape_of(NodeId id) const { return nodes_[check_id(id)].shape; }
  const std::vector<NodeId>& input_ids() const { return inputs_; }
  const std::vector<NodeId>& param_ids() const { return params_; }
  const Tensor<Real>& const_value(int pool_index) const { return consts_[pool_index]; }

 private:
  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  std::size_t check_id(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
      throw std::invalid_argument("node " + std::to_string(id) + " is not on this tape");
    return static_cast<std::size_t>(id);
  }

  [[noreturn]] void fail(const char* what, const std::string& msg) const {
    throw std::invalid_argument("node " + std::to_string(nodes_.size()) + " (" + what + "): " + msg);
  }

  NodeId unary(Op op, NodeId a) {
    Node n{op, shape_of(a), {a}, {}, {}, {}};
    return push(std::move(n));
  }

  NodeId elementwise(Op op, NodeId a, NodeId b) {
    if (shape_of(a) != shape_of(b))
      fail(op_name(op), "shape mismatch " + shape_str(shape_of(a)) + " vs " + shape_str(shape_of(b)));
    Node n{op, shape_of(a), {a, b}, {}, {}, {}};
    return push(std::move(n));
  }

  NodeId scalar_broadcast(Op op, NodeId x, NodeId s) {
    if (shape_numel(shape_of(s)) != 1)
      fail(op_name(op), "second operand must be scalar, got " + shape_str(shape_of(s)));
    Node n{op, shape_of(x), {x, s}, {}, {}, {}};
    return push(std::move(n));
  }

  NodeId rows(Op op, NodeId a) {
    require_rank(a, 2, op_name(op));
    Node n{op, shape_of(a), {a}, {}, {}, {}};
    return push(std::move(n));
  }

  NodeId reduce_all(Op op, NodeId a) {
    Node n{op, Shape{}, {a}, {}, {}, {}};
    return push(std::move(n));
  }

  NodeId reduce_axis(Op op, NodeId a, int axis) {
    Shape s = shape_of(a);
    if (axis < 0 || axis >= static_cast<int>(s.size()))
      fail(op_name(op), "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    s[axis] = 1;
    Node n{op, std::move(s), {a}, {axis}, {}, {}};
    return push(std::move(n));
  }

  const Shape& require_rank(NodeId a, int rank, const char* what) const {
    const Shape& s = shape_of(a);
    if (static_cast<int>(s.size()) != rank)
      throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(rank) +
                                  ", got " + shape_str(s) + " at node " + std::to_string(a));
    return s;
  }

  std::vector<Node> nodes_;
  std::vector<NodeId> inputs_;
  std::vector<NodeId> params_;
  std::vector<Tensor<Real>> consts_;
};

}  // namespace dvqa::ad
