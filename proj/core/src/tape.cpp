#include "dvqa/tape.hpp"

namespace dvqa::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Param: return "param";
    case Op::Const: return "const";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalarNode: return "add_scalar";
    case Op::MulScalarNode: return "mul_scalar";
    case Op::MatMul: return "matmul";
    case Op::Transpose2D: return "transpose2d";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::Sqrt: return "sqrt";
    case Op::Reciprocal: return "reciprocal";
    case Op::ClampMin: return "clamp_min";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::LogSoftmaxRows: return "log_softmax_rows";
    case Op::RowMax: return "row_max";
    case Op::SumAll: return "sum_all";
    case Op::MeanAll: return "mean_all";
    case Op::SumAxis: return "sum_axis";
    case Op::MeanAxis: return "mean_axis";
    case Op::BroadcastAxis: return "broadcast_axis";
    case Op::Slice: return "slice";
    case Op::Concat: return "concat";
    case Op::Reshape: return "reshape";
    case Op::BilinearResize: return "bilinear_resize";
    case Op::Patchify: return "patchify";
    case Op::MaskAssign: return "mask_assign";
    case Op::ChannelAffine: return "channel_affine";
  }
  return "unknown";
}

}  // namespace dvqa::ad
