#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "dvqa/autodiff.hpp"
#include "dvqa/png_io.hpp"
#include "dvqa/tensor.hpp"

namespace dvqa {

enum class PreprocessStyle { Headered, Padded };
enum class NormMode { Samplewise, Fixed };

struct PreprocessSpec {
  PreprocessStyle style = PreprocessStyle::Headered;
  int target_width = 256;   // full output extents, header band included
  int target_height = 384;
  int header_height = 32;   // Headered only
  NormMode norm = NormMode::Samplewise;
  std::array<double, 3> fixed_mean = {0.485, 0.456, 0.406};
  std::array<double, 3> fixed_std = {0.229, 0.224, 0.225};
  // Header pixels take part in the sample statistics by default: the band is
  // part of the image the encoder consumes.
  bool header_in_stats = true;
  double std_floor = 1e-6;

  static PreprocessSpec headered(int width = 256, int height = 384, int header = 32);
  static PreprocessSpec padded(int width = 256, int height = 384);

  void validate() const;
  int doc_height() const {
    return style == PreprocessStyle::Headered ? target_height - header_height : target_height;
  }
};

// Where the raw document lands on the output canvas:
// out_y = (raw_y + 0.5) * scale_y - 0.5 + offset_y, likewise for x.
struct Geometry {
  int raw_height = 0, raw_width = 0;
  int scaled_height = 0, scaled_width = 0;
  int offset_y = 0, offset_x = 0;
  double scale_y = 1.0, scale_x = 1.0;
};

struct PreprocessResult {
  Tensorf tensor;       // normalized float canvas [target_h, target_w, 3]
  Tensorf header_mask;  // 0/1, same extents; all zeros in the padded style
  Geometry geometry;
};

// Question band raster: black 5x7 glyphs at scale 1 on white, vertically
// centered. Throws when the question does not fit the canvas width.
Tensorf render_header_band(const std::string& question, int width, int header_height);

// Frozen reference pipelines. These take the 8-bit document directly, share no
// code with the tape kernels, and are what evaluation and reloaded-PNG checks
// run through.
PreprocessResult reference_headered(const ImageU8& image, const std::string& question,
                                    const PreprocessSpec& spec);
PreprocessResult reference_padded(const ImageU8& image, const PreprocessSpec& spec);
PreprocessResult reference_preprocess(const ImageU8& image, const std::string& question,
                                      const PreprocessSpec& spec);

// --- differentiable clones -------------------------------------------------

template <typename Real>
struct PreprocessGraph {
  ad::NodeId output = -1;        // normalized canvas node
  ad::NodeId canvas = -1;        // pre-normalization canvas node
  ad::NodeId header_block = -1;  // constant feeding the band the mask overwrites
  Tensor<Real> header_mask;
  Geometry geometry;
};

// x + delta in raw 8-bit space, ahead of any pipeline stage, so the tape input
// is the perturbation itself.
template <typename Real>
ad::NodeId apply_perturbation(ad::Tape<Real>& tape, const Tensor<Real>& clean_raw,
                              ad::NodeId delta) {
  if (tape.shape_of(delta) != clean_raw.shape)
    throw std::invalid_argument("apply_perturbation: delta extents " +
                                shape_str(tape.shape_of(delta)) + " do not match raw image " +
                                shape_str(clean_raw.shape));
  return tape.add(tape.constant(clean_raw, "clean_raw"), delta);
}

namespace detail {

template <typename Real>
ad::NodeId normalize_node(ad::Tape<Real>& tape, ad::NodeId canvas, ad::NodeId stats_src,
                          const PreprocessSpec& spec) {
  if (spec.norm == NormMode::Fixed) {
    std::vector<double> sc(3), sh(3);
    for (int c = 0; c < 3; ++c) {
      sc[c] = 1.0 / (255.0 * spec.fixed_std[c]);
      sh[c] = -spec.fixed_mean[c] / spec.fixed_std[c];
    }
    return tape.channel_affine(canvas, sc, sh);
  }
  ad::NodeId mean = tape.mean_all(stats_src);
  ad::NodeId centered_stats = tape.add_scalar_node(stats_src, tape.neg(mean));
  ad::NodeId var = tape.mean_all(tape.mul(centered_stats, centered_stats));
  ad::NodeId inv_std = tape.reciprocal(tape.clamp_min(tape.sqrt_(var), spec.std_floor));
  ad::NodeId centered = tape.add_scalar_node(canvas, tape.neg(mean));
  return tape.mul_scalar_node(centered, inv_std);
}

}  // namespace detail

template <typename Real>
PreprocessGraph<Real> build_headered(ad::Tape<Real>& tape, ad::NodeId raw,
                                     const std::string& question, const PreprocessSpec& spec) {
  spec.validate();
  if (spec.style != PreprocessStyle::Headered)
    throw std::invalid_argument("build_headered: spec style is not Headered");
  const Shape& rs = tape.shape_of(raw);
  if (rs.size() != 3 || rs[2] != 3)
    throw std::invalid_argument("build_headered: raw image must be [H,W,3]");

  const int W = spec.target_width, H = spec.target_height, hh = spec.header_height;
  const int dh = H - hh;

  PreprocessGraph<Real> g;
  g.geometry.raw_height = rs[0];
  g.geometry.raw_width = rs[1];
  g.geometry.scaled_height = dh;
  g.geometry.scaled_width = W;
  g.geometry.offset_y = hh;
  g.geometry.offset_x = 0;
  g.geometry.scale_y = static_cast<double>(dh) / rs[0];
  g.geometry.scale_x = static_cast<double>(W) / rs[1];

  ad::NodeId resized = tape.bilinear_resize(raw, dh, W);
  g.header_block = tape.constant(Tensor<Real>({hh, W, 3}), "header_block");
  ad::NodeId stacked = tape.concat(0, {g.header_block, resized});

  // Question raster is a constant w.r.t. the perturbed image; the mask keeps
  // the band's gradient at literal zero.
  Tensorf band = render_header_band(question, W, hh);
  Tensor<Real> values({H, W, 3});
  for (std::size_t i = 0; i < band.data.size(); ++i)
    values.data[i] = static_cast<Real>(band.data[i]);
  Tensor<Real> mask({H, W, 3});
  std::fill(mask.data.begin(),
            mask.data.begin() + static_cast<std::ptrdiff_t>(shape_numel({hh, W, 3})), Real(1));
  g.header_mask = mask;
  g.canvas = tape.mask_assign(stacked, tape.constant(std::move(values), "header_pixels"), std::move(mask));

  ad::NodeId stats_src = g.canvas;
  if (!spec.header_in_stats)
    stats_src = tape.slice(g.canvas, {hh, 0, 0}, {dh, W, 3});
  g.output = detail::normalize_node(tape, g.canvas, stats_src, spec);
  return g;
}

template <typename Real>
PreprocessGraph<Real> build_padded(ad::Tape<Real>& tape, ad::NodeId raw,
                                   const PreprocessSpec& spec) {
  spec.validate();
  if (spec.style != PreprocessStyle::Padded)
    throw std::invalid_argument("build_padded: spec style is not Padded");
  const Shape& rs = tape.shape_of(raw);
  if (rs.size() != 3 || rs[2] != 3)
    throw std::invalid_argument("build_padded: raw image must be [H,W,3]");

  const int W = spec.target_width, H = spec.target_height;
  const double scale = std::min(static_cast<double>(W) / rs[1], static_cast<double>(H) / rs[0]);
  const int sh = std::clamp(static_cast<int>(std::lround(rs[0] * scale)), 1, H);
  const int sw = std::clamp(static_cast<int>(std::lround(rs[1] * scale)), 1, W);
  const int pad_top = (H - sh) / 2, pad_bottom = H - sh - pad_top;
  const int pad_left = (W - sw) / 2, pad_right = W - sw - pad_left;

  PreprocessGraph<Real> g;
  g.geometry.raw_height = rs[0];
  g.geometry.raw_width = rs[1];
  g.geometry.scaled_height = sh;
  g.geometry.scaled_width = sw;
  g.geometry.offset_y = pad_top;
  g.geometry.offset_x = pad_left;
  g.geometry.scale_y = static_cast<double>(sh) / rs[0];
  g.geometry.scale_x = static_cast<double>(sw) / rs[1];

  ad::NodeId body = tape.bilinear_resize(raw, sh, sw);
  std::vector<ad::NodeId> rows;
  if (pad_top > 0) rows.push_back(tape.constant(Tensor<Real>({pad_top, sw, 3}), "pad_top"));
  rows.push_back(body);
  if (pad_bottom > 0) rows.push_back(tape.constant(Tensor<Real>({pad_bottom, sw, 3}), "pad_bottom"));
  ad::NodeId column = rows.size() == 1 ? rows[0] : tape.concat(0, rows);

  std::vector<ad::NodeId> cols;
  if (pad_left > 0) cols.push_back(tape.constant(Tensor<Real>({H, pad_left, 3}), "pad_left"));
  cols.push_back(column);
  if (pad_right > 0) cols.push_back(tape.constant(Tensor<Real>({H, pad_right, 3}), "pad_right"));
  g.canvas = cols.size() == 1 ? cols[0] : tape.concat(1, cols);

  g.header_mask = Tensor<Real>({H, W, 3});
  g.output = detail::normalize_node(tape, g.canvas, g.canvas, spec);
  return g;
}

template <typename Real>
PreprocessGraph<Real> build_preprocess(ad::Tape<Real>& tape, ad::NodeId raw,
                                       const std::string& question, const PreprocessSpec& spec) {
  return spec.style == PreprocessStyle::Headered ? build_headered(tape, raw, question, spec)
                                                 : build_padded(tape, raw, spec);
}

}  // namespace dvqa
