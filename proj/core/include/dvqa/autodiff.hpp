#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <unordered_map>
#include <vector>

#include "dvqa/rng.hpp"
#include "dvqa/tape.hpp"

namespace dvqa::ad {

template <typename Real>
using Bindings = std::unordered_map<NodeId, Tensor<Real>>;

struct EvalOptions {
  bool check_finite = true;
};

// Values for every node after a forward pass over the tape.
template <typename Real>
struct Forward {
  std::vector<Tensor<Real>> values;
  const Tensor<Real>& value(NodeId id) const { return values[static_cast<std::size_t>(id)]; }
};

namespace detail {

// outer * axis * inner decomposition of a shape around one axis
struct AxisSplit {
  std::size_t outer = 1, axis = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit sp;
  for (int d = 0; d < static_cast<int>(s.size()); ++d) {
    if (d < axis)
      sp.outer *= static_cast<std::size_t>(s[d]);
    else if (d == axis)
      sp.axis = static_cast<std::size_t>(s[d]);
    else
      sp.inner *= static_cast<std::size_t>(s[d]);
  }
  return sp;
}

inline std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (int d = static_cast<int>(s.size()) - 2; d >= 0; --d)
    st[d] = st[d + 1] * static_cast<std::size_t>(s[d + 1]);
  return st;
}

struct ResizeTap {
  int lo, hi;
  double w_hi;  // weight of hi; lo gets 1 - w_hi
};

inline std::vector<ResizeTap> resize_taps(int in_extent, int out_extent) {
  std::vector<ResizeTap> taps(static_cast<std::size_t>(out_extent));
  const double scale = static_cast<double>(in_extent) / static_cast<double>(out_extent);
  for (int d = 0; d < out_extent; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    if (src > in_extent - 1) src = in_extent - 1;
    int lo = static_cast<int>(std::floor(src));
    int hi = std::min(lo + 1, in_extent - 1);
    taps[static_cast<std::size_t>(d)] = {lo, hi, src - lo};
  }
  return taps;
}

template <typename Real>
void matmul_accum(const Real* a, const Real* b, Real* out, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const Real* arow = a + static_cast<std::size_t>(i) * k;
    Real* orow = out + static_cast<std::size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const Real aik = arow[kk];
      if (aik == Real(0)) continue;
      const Real* brow = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
}

}  // namespace detail

template <typename Real>
Forward<Real> forward(const Tape<Real>& tape, const Bindings<Real>& bindings,
                      const EvalOptions& opts = {}) {
  Forward<Real> fwd;
  fwd.values.resize(static_cast<std::size_t>(tape.size()));

  for (NodeId id = 0; id < tape.size(); ++id) {
    const Node& n = tape.node(id);
    Tensor<Real>& out = fwd.values[static_cast<std::size_t>(id)];
    auto in = [&](int i) -> const Tensor<Real>& {
      return fwd.values[static_cast<std::size_t>(n.inputs[static_cast<std::size_t>(i)])];
    };

    switch (n.op) {
      case Op::Input:
      case Op::Param: {
        auto it = bindings.find(id);
        if (it == bindings.end())
          throw std::invalid_argument("node " + std::to_string(id) + " (" + n.name +
                                      "): no binding provided");
        if (it->second.shape != n.shape)
          throw std::invalid_argument("node " + std::to_string(id) + " (" + n.name +
                                      "): bound shape " + shape_str(it->second.shape) +
                                      " does not match declared " + shape_str(n.shape));
        out = it->second;
        break;
      }
      case Op::Const:
        out = tape.const_value(n.iattr[0]);
        break;
      case Op::Add: {
        out = in(0);
        const auto& b = in(1).data;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b[i];
        break;
      }
      case Op::Sub: {
        out = in(0);
        const auto& b = in(1).data;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b[i];
        break;
      }
      case Op::Mul: {
        out = in(0);
        const auto& b = in(1).data;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b[i];
        break;
      }
      case Op::Scale: {
        out = in(0);
        const Real alpha = static_cast<Real>(n.rattr[0]);
        for (auto& v : out.data) v *= alpha;
        break;
      }
      case Op::AddScalarNode: {
        out = in(0);
        const Real s = in(1).data[0];
        for (auto& v : out.data) v += s;
        break;
      }
      case Op::MulScalarNode: {
        out = in(0);
        const Real s = in(1).data[0];
        for (auto& v : out.data) v *= s;
        break;
      }
      case Op::MatMul: {
        const auto& a = in(0);
        const auto& b = in(1);
        out = Tensor<Real>(n.shape);
        detail::matmul_accum(a.data.data(), b.data.data(), out.data.data(), a.shape[0], a.shape[1],
                             b.shape[1]);
        break;
      }
      case Op::Transpose2D: {
        const auto& a = in(0);
        out = Tensor<Real>(n.shape);
        for (int i = 0; i < a.shape[0]; ++i)
          for (int j = 0; j < a.shape[1]; ++j) out.at2(j, i) = a.at2(i, j);
        break;
      }
      case Op::Relu: {
        out = in(0);
        for (auto& v : out.data) v = v > Real(0) ? v : Real(0);
        break;
      }
      case Op::Tanh: {
        out = in(0);
        for (auto& v : out.data) v = std::tanh(v);
        break;
      }
      case Op::Log: {
        out = in(0);
        for (auto& v : out.data) v = std::log(v);
        break;
      }
      case Op::Exp: {
        out = in(0);
        for (auto& v : out.data) v = std::exp(v);
        break;
      }
      case Op::Sqrt: {
        out = in(0);
        for (auto& v : out.data) v = std::sqrt(v);
        break;
      }
      case Op::Reciprocal: {
        out = in(0);
        for (auto& v : out.data) v = Real(1) / v;
        break;
      }
      case Op::ClampMin: {
        out = in(0);
        const Real floor_v = static_cast<Real>(n.rattr[0]);
        for (auto& v : out.data) v = v > floor_v ? v : floor_v;
        break;
      }
      case Op::SoftmaxRows: {
        const auto& a = in(0);
        out = Tensor<Real>(n.shape);
        const int rows = a.shape[0], cols = a.shape[1];
        for (int r = 0; r < rows; ++r) {
          const Real* x = a.data.data() + static_cast<std::size_t>(r) * cols;
          Real* y = out.data.data() + static_cast<std::size_t>(r) * cols;
          Real m = x[0];
          for (int c = 1; c < cols; ++c) m = std::max(m, x[c]);
          Real sum = Real(0);
          for (int c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - m);
            sum += y[c];
          }
          const Real inv = Real(1) / sum;
          for (int c = 0; c < cols; ++c) y[c] *= inv;
        }
        break;
      }
      case Op::LogSoftmaxRows: {
        const auto& a = in(0);
        out = Tensor<Real>(n.shape);
        const int rows = a.shape[0], cols = a.shape[1];
        for (int r = 0; r < rows; ++r) {
          const Real* x = a.data.data() + static_cast<std::size_t>(r) * cols;
          Real* y = out.data.data() + static_cast<std::size_t>(r) * cols;
          Real m = x[0];
          for (int c = 1; c < cols; ++c) m = std::max(m, x[c]);
          Real sum = Real(0);
          for (int c = 0; c < cols; ++c) sum += std::exp(x[c] - m);
          const Real lse = m + std::log(sum);
          for (int c = 0; c < cols; ++c) y[c] = x[c] - lse;
        }
        break;
      }
      case Op::RowMax: {
        const auto& a = in(0);
        out = Tensor<Real>(n.shape);
        const int rows = a.shape[0], cols = a.shape[1];
        for (int r = 0; r < rows; ++r) {
          const Real* x = a.data.data() + static_cast<std::size_t>(r) * cols;
          Real m = x[0];
          for (int c = 1; c < cols; ++c)
            if (x[c] > m) m = x[c];
          out.data[static_cast<std::size_t>(r)] = m;
        }
        break;
      }
      case Op::SumAll:
      case Op::MeanAll: {
        // reductions accumulate in double so the float tape tracks the
        // double-precision reference pipeline
        const auto& a = in(0);
        double acc = 0.0;
        for (Real v : a.data) acc += static_cast<double>(v);
        if (n.op == Op::MeanAll) acc /= static_cast<double>(a.data.size());
        out = Tensor<Real>::scalar(static_cast<Real>(acc));
        break;
      }
      case Op::SumAxis:
      case Op::MeanAxis: {
        const auto& a = in(0);
        const auto sp = detail::split_axis(a.shape, n.iattr[0]);
        out = Tensor<Real>(n.shape);
        std::vector<double> acc(sp.inner);
        for (std::size_t o = 0; o < sp.outer; ++o) {
          std::fill(acc.begin(), acc.end(), 0.0);
          for (std::size_t k = 0; k < sp.axis; ++k) {
            const Real* src = a.data.data() + (o * sp.axis + k) * sp.inner;
            for (std::size_t i = 0; i < sp.inner; ++i) acc[i] += static_cast<double>(src[i]);
          }
          const double inv = n.op == Op::MeanAxis ? 1.0 / static_cast<double>(sp.axis) : 1.0;
          Real* dst = out.data.data() + o * sp.inner;
          for (std::size_t i = 0; i < sp.inner; ++i) dst[i] = static_cast<Real>(acc[i] * inv);
        }
        break;
      }
      case Op::BroadcastAxis: {
        const auto& a = in(0);
        const auto sp = detail::split_axis(n.shape, n.iattr[0]);
        out = Tensor<Real>(n.shape);
        for (std::size_t o = 0; o < sp.outer; ++o) {
          const Real* src = a.data.data() + o * sp.inner;
          for (std::size_t k = 0; k < sp.axis; ++k) {
            Real* dst = out.data.data() + (o * sp.axis + k) * sp.inner;
            for (std::size_t i = 0; i < sp.inner; ++i) dst[i] = src[i];
          }
        }
        break;
      }
      case Op::Slice: {
        const auto& a = in(0);
        out = Tensor<Real>(n.shape);
        const auto in_strides = detail::row_major_strides(a.shape);
        const int rank = static_cast<int>(n.shape.size());
        std::vector<int> idx(static_cast<std::size_t>(rank), 0);
        for (std::size_t flat = 0; flat < out.data.size(); ++flat) {
          std::size_t src = 0;
          for (int d = 0; d < rank; ++d)
            src += static_cast<std::size_t>(n.iattr[2 * d] + idx[static_cast<std::size_t>(d)]) *
                   in_strides[static_cast<std::size_t>(d)];
          out.data[flat] = a.data[src];
          for (int d = rank - 1; d >= 0; --d) {
            if (++idx[static_cast<std::size_t>(d)] < n.shape[d]) break;
            idx[static_cast<std::size_t>(d)] = 0;
          }
        }
        break;
      }
      case Op::Concat: {
        const int axis = n.iattr[0];
        const auto sp = detail::split_axis(n.shape, axis);
        out = Tensor<Real>(n.shape);
        std::size_t axis_off = 0;
        for (std::size_t p = 0; p < n.inputs.size(); ++p) {
          const auto& part = in(static_cast<int>(p));
          const std::size_t part_axis = static_cast<std::size_t>(part.shape[axis]);
          for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t k = 0; k < part_axis; ++k) {
              const Real* src = part.data.data() + (o * part_axis + k) * sp.inner;
              Real* dst = out.data.data() + (o * sp.axis + axis_off + k) * sp.inner;
              std::copy(src, src + sp.inner, dst);
            }
          axis_off += part_axis;
        }
        break;
      }
      case Op::Reshape:
        out = in(0);
        out.shape = n.shape;
        break;
      case Op::BilinearResize: {
        const auto& a = in(0);
        const int ih = a.shape[0], iw = a.shape[1], ch = a.shape[2];
        const int oh = n.iattr[0], ow = n.iattr[1];
        const auto ty = detail::resize_taps(ih, oh);
        const auto tx = detail::resize_taps(iw, ow);
        out = Tensor<Real>(n.shape);
        for (int y = 0; y < oh; ++y) {
          const auto& vy = ty[static_cast<std::size_t>(y)];
          const Real wy1 = static_cast<Real>(vy.w_hi), wy0 = Real(1) - wy1;
          for (int x = 0; x < ow; ++x) {
            const auto& vx = tx[static_cast<std::size_t>(x)];
            const Real wx1 = static_cast<Real>(vx.w_hi), wx0 = Real(1) - wx1;
            for (int c = 0; c < ch; ++c) {
              out.at3(y, x, c) = wy0 * wx0 * a.at3(vy.lo, vx.lo, c) +
                                 wy0 * wx1 * a.at3(vy.lo, vx.hi, c) +
                                 wy1 * wx0 * a.at3(vy.hi, vx.lo, c) +
                                 wy1 * wx1 * a.at3(vy.hi, vx.hi, c);
            }
          }
        }
        break;
      }
      case Op::Patchify: {
        const auto& a = in(0);
        const int P = n.iattr[0];
        const int gh = a.shape[0] / P, gw = a.shape[1] / P, ch = a.shape[2];
        out = Tensor<Real>(n.shape);
        std::size_t row = 0;
        for (int pr = 0; pr < gh; ++pr)
          for (int pc = 0; pc < gw; ++pc, ++row) {
            Real* dst = out.data.data() + row * static_cast<std::size_t>(n.shape[1]);
            for (int dy = 0; dy < P; ++dy)
              for (int dx = 0; dx < P; ++dx)
                for (int c = 0; c < ch; ++c)
                  *dst++ = a.at3(pr * P + dy, pc * P + dx, c);
          }
        break;
      }
      case Op::MaskAssign: {
        const auto& base = in(0);
        const auto& vals = in(1);
        const auto& mask = tape.const_value(n.iattr[0]);
        out = base;
        for (std::size_t i = 0; i < out.data.size(); ++i)
          if (mask.data[i] != Real(0)) out.data[i] = vals.data[i];
        break;
      }
      case Op::ChannelAffine: {
        const auto& a = in(0);
        const int ch = a.shape[2];
        out = Tensor<Real>(n.shape);
        const std::size_t pixels = a.data.size() / static_cast<std::size_t>(ch);
        for (std::size_t p = 0; p < pixels; ++p)
          for (int c = 0; c < ch; ++c)
            out.data[p * ch + c] = a.data[p * ch + c] * static_cast<Real>(n.rattr[c]) +
                                   static_cast<Real>(n.rattr[ch + c]);
        break;
      }
    }

    if (opts.check_finite) {
      for (Real v : out.data) {
        if (!std::isfinite(static_cast<double>(v)))
          throw std::runtime_error("node " + std::to_string(id) + " (" + op_name(n.op) +
                                   "): non-finite value in forward pass");
      }
    }
  }
  return fwd;
}

// Reverse sweep from a scalar output. Returns one adjoint per requested node,
// in the same order and with the same shape as the node's value.
template <typename Real>
std::vector<Tensor<Real>> gradient(const Tape<Real>& tape, const Forward<Real>& fwd, NodeId output,
                                   std::span<const NodeId> wrt) {
  if (output < 0 || output >= tape.size())
    throw std::invalid_argument("gradient: output node " + std::to_string(output) +
                                " is not on this tape");
  if (shape_numel(tape.shape_of(output)) != 1)
    throw std::invalid_argument("gradient: output node " + std::to_string(output) +
                                " is not scalar-valued, shape " +
                                shape_str(tape.shape_of(output)));
  for (NodeId w : wrt)
    if (w < 0 || w >= tape.size())
      throw std::invalid_argument("gradient: wrt node " + std::to_string(w) +
                                  " is not on this tape");

  // restrict the sweep to ancestors of the output
  std::vector<char> needed(static_cast<std::size_t>(tape.size()), 0);
  needed[static_cast<std::size_t>(output)] = 1;
  for (NodeId id = output; id >= 0; --id) {
    if (!needed[static_cast<std::size_t>(id)]) continue;
    for (NodeId i : tape.node(id).inputs) needed[static_cast<std::size_t>(i)] = 1;
  }

  std::vector<Tensor<Real>> adj(static_cast<std::size_t>(tape.size()));
  auto accum = [&](NodeId id, std::size_t flat, Real v) {
    Tensor<Real>& g = adj[static_cast<std::size_t>(id)];
    if (g.data.empty()) g = Tensor<Real>(tape.shape_of(id));
    g.data[flat] += v;
  };
  auto grad_of = [&](NodeId id) -> Tensor<Real>& {
    Tensor<Real>& g = adj[static_cast<std::size_t>(id)];
    if (g.data.empty()) g = Tensor<Real>(tape.shape_of(id));
    return g;
  };

  grad_of(output).data[0] = Real(1);

  for (NodeId id = output; id >= 0; --id) {
    if (!needed[static_cast<std::size_t>(id)]) continue;
    const Node& n = tape.node(id);
    if (n.inputs.empty()) continue;
    Tensor<Real>& g = adj[static_cast<std::size_t>(id)];
    if (g.data.empty()) continue;  // no influence on the output
    auto val = [&](int i) -> const Tensor<Real>& {
      return fwd.values[static_cast<std::size_t>(n.inputs[static_cast<std::size_t>(i)])];
    };
    const Tensor<Real>& y = fwd.values[static_cast<std::size_t>(id)];

    switch (n.op) {
      case Op::Input:
      case Op::Param:
      case Op::Const:
        break;
      case Op::Add:
        for (std::size_t i = 0; i < g.data.size(); ++i) accum(n.inputs[0], i, g.data[i]);
        for (std::size_t i = 0; i < g.data.size(); ++i) accum(n.inputs[1], i, g.data[i]);
        break;
      case Op::Sub:
        for (std::size_t i = 0; i < g.data.size(); ++i) accum(n.inputs[0], i, g.data[i]);
        for (std::size_t i = 0; i < g.data.size(); ++i) accum(n.inputs[1], i, -g.data[i]);
        break;
      case Op::Mul: {
        const auto& a = val(0);
        const auto& b = val(1);
        for (std::size_t i = 0; i < g.data.size(); ++i) accum(n.inputs[0], i, g.data[i] * b.data[i]);
        for (std::size_t i = 0; i < g.data.size(); ++i) accum(n.inputs[1], i, g.data[i] * a.data[i]);
        break;
      }
      case Op::Scale: {
        const Real alpha = static_cast<Real>(n.rattr[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) accum(n.inputs[0], i, alpha * g.data[i]);
        break;
      }
      case Op::AddScalarNode: {
        for (std::size_t i = 0; i < g.data.size(); ++i) accum(n.inputs[0], i, g.data[i]);
        Real s = Real(0);
        for (Real v : g.data) s += v;
        accum(n.inputs[1], 0, s);
        break;
      }
      case Op::MulScalarNode: {
        const auto& x = val(0);
        const Real s = val(1).data[0];
        for (std::size_t i = 0; i < g.data.size(); ++i) accum(n.inputs[0], i, g.data[i] * s);
        Real acc = Real(0);
        for (std::size_t i = 0; i < g.data.size(); ++i) acc += g.data[i] * x.data[i];
        accum(n.inputs[1], 0, acc);
        break;
      }
      case Op::MatMul: {
        const auto& a = val(0);
        const auto& b = val(1);
        const int m = a.shape[0], k = a.shape[1], nn = b.shape[1];
        Tensor<Real>& ga = grad_of(n.inputs[0]);
        Tensor<Real>& gb = grad_of(n.inputs[1]);
        // dA += g * B^T
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            Real acc = Real(0);
            const Real* grow = g.data.data() + static_cast<std::size_t>(i) * nn;
            const Real* brow = b.data.data() + static_cast<std::size_t>(kk) * nn;
            for (int j = 0; j < nn; ++j) acc += grow[j] * brow[j];
            ga.data[static_cast<std::size_t>(i) * k + kk] += acc;
          }
        // dB += A^T * g
        for (int kk = 0; kk < k; ++kk)
          for (int i = 0; i < m; ++i) {
            const Real aik = a.data[static_cast<std::size_t>(i) * k + kk];
            if (aik == Real(0)) continue;
            const Real* grow = g.data.data() + static_cast<std::size_t>(i) * nn;
            Real* brow = gb.data.data() + static_cast<std::size_t>(kk) * nn;
            for (int j = 0; j < nn; ++j) brow[j] += aik * grow[j];
          }
        break;
      }
      case Op::Transpose2D: {
        Tensor<Real>& ga = grad_of(n.inputs[0]);
        const int rows = n.shape[0], cols = n.shape[1];  // shape of y
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j)
            ga.data[static_cast<std::size_t>(j) * rows + i] +=
                g.data[static_cast<std::size_t>(i) * cols + j];
        break;
      }
      case Op::Relu: {
        const auto& x = val(0);
        for (std::size_t i = 0; i < g.data.size(); ++i)
          if (x.data[i] > Real(0)) accum(n.inputs[0], i, g.data[i]);
        break;
      }
      case Op::Tanh:
        for (std::size_t i = 0; i < g.data.size(); ++i)
          accum(n.inputs[0], i, g.data[i] * (Real(1) - y.data[i] * y.data[i]));
        break;
      case Op::Log: {
        const auto& x = val(0);
        for (std::size_t i = 0; i < g.data.size(); ++i)
          accum(n.inputs[0], i, g.data[i] / x.data[i]);
        break;
      }
      case Op::Exp:
        for (std::size_t i = 0; i < g.data.size(); ++i)
          accum(n.inputs[0], i, g.data[i] * y.data[i]);
        break;
      case Op::Sqrt:
        for (std::size_t i = 0; i < g.data.size(); ++i)
          accum(n.inputs[0], i, g.data[i] / (Real(2) * y.data[i]));
        break;
      case Op::Reciprocal:
        for (std::size_t i = 0; i < g.data.size(); ++i)
          accum(n.inputs[0], i, -g.data[i] * y.data[i] * y.data[i]);
        break;
      case Op::ClampMin: {
        const auto& x = val(0);
        const Real floor_v = static_cast<Real>(n.rattr[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i)
          if (x.data[i] > floor_v) accum(n.inputs[0], i, g.data[i]);
        break;
      }
      case Op::SoftmaxRows: {
        Tensor<Real>& ga = grad_of(n.inputs[0]);
        const int rows = n.shape[0], cols = n.shape[1];
        for (int r = 0; r < rows; ++r) {
          const Real* yr = y.data.data() + static_cast<std::size_t>(r) * cols;
          const Real* gr = g.data.data() + static_cast<std::size_t>(r) * cols;
          Real* dr = ga.data.data() + static_cast<std::size_t>(r) * cols;
          Real dot = Real(0);
          for (int c = 0; c < cols; ++c) dot += gr[c] * yr[c];
          for (int c = 0; c < cols; ++c) dr[c] += yr[c] * (gr[c] - dot);
        }
        break;
      }
      case Op::LogSoftmaxRows: {
        Tensor<Real>& ga = grad_of(n.inputs[0]);
        const int rows = n.shape[0], cols = n.shape[1];
        for (int r = 0; r < rows; ++r) {
          const Real* yr = y.data.data() + static_cast<std::size_t>(r) * cols;
          const Real* gr = g.data.data() + static_cast<std::size_t>(r) * cols;
          Real* dr = ga.data.data() + static_cast<std::size_t>(r) * cols;
          Real gsum = Real(0);
          for (int c = 0; c < cols; ++c) gsum += gr[c];
          for (int c = 0; c < cols; ++c) dr[c] += gr[c] - std::exp(yr[c]) * gsum;
        }
        break;
      }
      case Op::RowMax: {
        const auto& x = val(0);
        Tensor<Real>& ga = grad_of(n.inputs[0]);
        const int rows = x.shape[0], cols = x.shape[1];
        for (int r = 0; r < rows; ++r) {
          const Real* xr = x.data.data() + static_cast<std::size_t>(r) * cols;
          int arg = 0;
          for (int c = 1; c < cols; ++c)
            if (xr[c] > xr[arg]) arg = c;
          ga.data[static_cast<std::size_t>(r) * cols + arg] += g.data[static_cast<std::size_t>(r)];
        }
        break;
      }
      case Op::SumAll: {
        const Real gv = g.data[0];
        Tensor<Real>& ga = grad_of(n.inputs[0]);
        for (auto& v : ga.data) v += gv;
        break;
      }
      case Op::MeanAll: {
        Tensor<Real>& ga = grad_of(n.inputs[0]);
        const Real gv = g.data[0] / static_cast<Real>(ga.data.size());
        for (auto& v : ga.data) v += gv;
        break;
      }
      case Op::SumAxis:
      case Op::MeanAxis: {
        Tensor<Real>& ga = grad_of(n.inputs[0]);
        const auto sp = detail::split_axis(val(0).shape, n.iattr[0]);
        const Real inv = n.op == Op::MeanAxis ? Real(1) / static_cast<Real>(sp.axis) : Real(1);
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t k = 0; k < sp.axis; ++k) {
            Real* dst = ga.data.data() + (o * sp.axis + k) * sp.inner;
            const Real* src = g.data.data() + o * sp.inner;
            for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i] * inv;
          }
        break;
      }
      case Op::BroadcastAxis: {
        Tensor<Real>& ga = grad_of(n.inputs[0]);
        const auto sp = detail::split_axis(n.shape, n.iattr[0]);
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t k = 0; k < sp.axis; ++k) {
            const Real* src = g.data.data() + (o * sp.axis + k) * sp.inner;
            Real* dst = ga.data.data() + o * sp.inner;
            for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
          }
        break;
      }
      case Op::Slice: {
        Tensor<Real>& ga = grad_of(n.inputs[0]);
        const auto in_strides = detail::row_major_strides(val(0).shape);
        const int rank = static_cast<int>(n.shape.size());
        std::vector<int> idx(static_cast<std::size_t>(rank), 0);
        for (std::size_t flat = 0; flat < g.data.size(); ++flat) {
          std::size_t dst = 0;
          for (int d = 0; d < rank; ++d)
            dst += static_cast<std::size_t>(n.iattr[2 * d] + idx[static_cast<std::size_t>(d)]) *
                   in_strides[static_cast<std::size_t>(d)];
          ga.data[dst] += g.data[flat];
          for (int d = rank - 1; d >= 0; --d) {
            if (++idx[static_cast<std::size_t>(d)] < n.shape[d]) break;
            idx[static_cast<std::size_t>(d)] = 0;
          }
        }
        break;
      }
      case Op::Concat: {
        const int axis = n.iattr[0];
        const auto sp = detail::split_axis(n.shape, axis);
        std::size_t axis_off = 0;
        for (std::size_t p = 0; p < n.inputs.size(); ++p) {
          Tensor<Real>& gp = grad_of(n.inputs[p]);
          const std::size_t part_axis = static_cast<std::size_t>(val(static_cast<int>(p)).shape[axis]);
          for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t k = 0; k < part_axis; ++k) {
              const Real* src = g.data.data() + (o * sp.axis + axis_off + k) * sp.inner;
              Real* dst = gp.data.data() + (o * part_axis + k) * sp.inner;
              for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
            }
          axis_off += part_axis;
        }
        break;
      }
      case Op::Reshape: {
        Tensor<Real>& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        break;
      }
      case Op::BilinearResize: {
        const auto& a = val(0);
        Tensor<Real>& ga = grad_of(n.inputs[0]);
        const int oh = n.iattr[0], ow = n.iattr[1], ch = a.shape[2];
        const auto ty = detail::resize_taps(a.shape[0], oh);
        const auto tx = detail::resize_taps(a.shape[1], ow);
        for (int yy = 0; yy < oh; ++yy) {
          const auto& vy = ty[static_cast<std::size_t>(yy)];
          const Real wy1 = static_cast<Real>(vy.w_hi), wy0 = Real(1) - wy1;
          for (int x = 0; x < ow; ++x) {
            const auto& vx = tx[static_cast<std::size_t>(x)];
            const Real wx1 = static_cast<Real>(vx.w_hi), wx0 = Real(1) - wx1;
            for (int c = 0; c < ch; ++c) {
              const Real gv = g.at3(yy, x, c);
              ga.at3(vy.lo, vx.lo, c) += wy0 * wx0 * gv;
              ga.at3(vy.lo, vx.hi, c) += wy0 * wx1 * gv;
              ga.at3(vy.hi, vx.lo, c) += wy1 * wx0 * gv;
              ga.at3(vy.hi, vx.hi, c) += wy1 * wx1 * gv;
            }
          }
        }
        break;
      }
      case Op::Patchify: {
        const auto& a = val(0);
        Tensor<Real>& ga = grad_of(n.inputs[0]);
        const int P = n.iattr[0];
        const int gh = a.shape[0] / P, gw = a.shape[1] / P, ch = a.shape[2];
        std::size_t row = 0;
        for (int pr = 0; pr < gh; ++pr)
          for (int pc = 0; pc < gw; ++pc, ++row) {
            const Real* src = g.data.data() + row * static_cast<std::size_t>(n.shape[1]);
            for (int dy = 0; dy < P; ++dy)
              for (int dx = 0; dx < P; ++dx)
                for (int c = 0; c < ch; ++c)
                  ga.at3(pr * P + dy, pc * P + dx, c) += *src++;
          }
        break;
      }
      case Op::MaskAssign: {
        const auto& mask = tape.const_value(n.iattr[0]);
        Tensor<Real>& gb = grad_of(n.inputs[0]);
        Tensor<Real>& gv = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          if (mask.data[i] != Real(0))
            gv.data[i] += g.data[i];
          else
            gb.data[i] += g.data[i];
        }
        break;
      }
      case Op::ChannelAffine: {
        Tensor<Real>& ga = grad_of(n.inputs[0]);
        const int ch = n.shape[2];
        const std::size_t pixels = g.data.size() / static_cast<std::size_t>(ch);
        for (std::size_t p = 0; p < pixels; ++p)
          for (int c = 0; c < ch; ++c)
            ga.data[p * ch + c] += g.data[p * ch + c] * static_cast<Real>(n.rattr[c]);
        break;
      }
    }
  }

  std::vector<Tensor<Real>> out;
  out.reserve(wrt.size());
  for (NodeId w : wrt) {
    Tensor<Real>& gw = adj[static_cast<std::size_t>(w)];
    if (gw.data.empty()) gw = Tensor<Real>(tape.shape_of(w));
    out.push_back(gw);
  }
  return out;
}

struct GradCheckOptions {
  double step = 1e-5;
  // 0 checks every component; otherwise check a random sample of this many
  // components per wrt node (the full adversarial image is too wide for
  // exhaustive differencing).
  int max_components = 0;
  std::uint64_t seed = 0;
};

// Central finite differences against the reverse-mode result. Returns
// max over checked components of |analytic - numeric| / max(1, |analytic|).
// Meant for Real = double.
template <typename Real>
double check_gradient(const Tape<Real>& tape, const Bindings<Real>& bindings, NodeId output,
                      std::span<const NodeId> wrt, const GradCheckOptions& opts = {}) {
  Forward<Real> fwd = forward(tape, bindings);
  std::vector<Tensor<Real>> analytic = gradient(tape, fwd, output, wrt);

  Rng rng(opts.seed);
  double worst = 0.0;
  for (std::size_t wi = 0; wi < wrt.size(); ++wi) {
    const NodeId w = wrt[wi];
    const Node& n = tape.node(w);
    if (n.op != Op::Input && n.op != Op::Param)
      throw std::invalid_argument("check_gradient: node " + std::to_string(w) +
                                  " is not a bound input or param");
    Bindings<Real> b = bindings;
    Tensor<Real>& t = b.at(w);

    std::vector<std::size_t> components;
    if (opts.max_components > 0 && t.data.size() > static_cast<std::size_t>(opts.max_components)) {
      for (int i = 0; i < opts.max_components; ++i)
        components.push_back(static_cast<std::size_t>(rng.uniform_int(t.data.size())));
    } else {
      components.resize(t.data.size());
      for (std::size_t i = 0; i < t.data.size(); ++i) components[i] = i;
    }

    for (std::size_t ci : components) {
      const Real saved = t.data[ci];
      t.data[ci] = saved + static_cast<Real>(opts.step);
      const double fp = static_cast<double>(forward(tape, b).value(output).data[0]);
      t.data[ci] = saved - static_cast<Real>(opts.step);
      const double fm = static_cast<double>(forward(tape, b).value(output).data[0]);
      t.data[ci] = saved;
      const double numeric = (fp - fm) / (2.0 * opts.step);
      const double a = static_cast<double>(analytic[wi].data[ci]);
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace dvqa::ad
