#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "dvqa/docgen.hpp"
#include "dvqa/preprocess.hpp"
#include "dvqa/rng.hpp"

using namespace dvqa;
using ad::NodeId;

namespace {

ImageU8 random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  ImageU8 img(h, w);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
  return img;
}

template <typename Real>
Tensor<Real> as_real(const ImageU8& img) {
  return tensor_cast<Real>(to_float_tensor(img));
}

}  // namespace

TEST_CASE("headered fit arithmetic at the stock geometry") {
  // 256x384 document into a 32x44-patch body grid of 8px patches plus a 32px
  // header: body lands at 352x256, the full canvas at 384x256.
  const PreprocessSpec spec = PreprocessSpec::headered(256, 384, 32);
  const ImageU8 img = random_image(384, 256, 1);
  const PreprocessResult r = reference_headered(img, "what is the total?", spec);
  CHECK(r.tensor.shape == Shape{384, 256, 3});
  CHECK(r.geometry.scaled_height == 352);
  CHECK(r.geometry.scaled_width == 256);
  CHECK(r.geometry.offset_y == 32);
  CHECK(r.geometry.scale_y == doctest::Approx(352.0 / 384.0));
  CHECK(r.geometry.scale_x == doctest::Approx(1.0));
  // mask covers exactly the header band
  for (int y = 0; y < 384; ++y)
    for (int x = 0; x < 256; x += 61)
      CHECK(r.header_mask.at3(y, x, 0) == (y < 32 ? 1.0f : 0.0f));
}

TEST_CASE("constant page standardizes to zero under the std guard") {
  PreprocessSpec spec = PreprocessSpec::headered(160, 208, 16);
  spec.header_in_stats = false;  // keep the rendered question out of the statistics
  const ImageU8 img(96, 64, 127);
  const PreprocessResult r = reference_headered(img, "what is the total?", spec);
  for (int y = 20; y < 208; y += 13)
    for (int x = 0; x < 160; x += 17) CHECK(r.tensor.at3(y, x, 0) == doctest::Approx(0.0));
}

TEST_CASE("header gradient is exactly zero") {
  const PreprocessSpec spec = PreprocessSpec::headered(160, 208, 16);
  ad::Tape<double> tape;
  NodeId raw = tape.input({96, 64, 3}, "raw");
  auto g = build_headered(tape, raw, "what is the total?", spec);
  NodeId loss = tape.sum_all(tape.mul(g.output, g.output));

  ad::Bindings<double> bind{{raw, as_real<double>(random_image(96, 64, 2))}};
  ad::Forward<double> fwd = ad::forward(tape, bind);
  auto grads = ad::gradient(tape, fwd, loss, std::vector<NodeId>{g.header_block});
  for (double v : grads[0].data) CHECK(v == 0.0);
}

TEST_CASE("padded resize at target extents is the identity") {
  const PreprocessSpec spec = PreprocessSpec::padded(64, 96);
  const ImageU8 img = random_image(96, 64, 3);
  const PreprocessResult r = reference_padded(img, spec);
  CHECK(r.geometry.scaled_height == 96);
  CHECK(r.geometry.offset_y == 0);
  CHECK(r.geometry.offset_x == 0);
  // identity resize means the output is exactly the normalized input
  for (int y = 0; y < 96; y += 7)
    for (int x = 0; x < 64; x += 5)
      for (int c = 0; c < 3; ++c) {
        const double want = (img.at(y, x, c) / 255.0 - spec.fixed_mean[c]) / spec.fixed_std[c];
        CHECK(std::abs(r.tensor.at3(y, x, c) - want) < 1e-6);
      }
}

TEST_CASE("narrow page gets symmetric side padding with dead gradients") {
  const PreprocessSpec spec = PreprocessSpec::padded(256, 384);
  const ImageU8 img = random_image(384, 128, 4);
  const PreprocessResult r = reference_padded(img, spec);
  CHECK(r.geometry.scaled_width == 128);
  CHECK(r.geometry.offset_x == 64);

  // tape route: loss reads only the pad bands; input gradient must vanish
  ad::Tape<double> tape;
  NodeId raw = tape.input({384, 128, 3}, "raw");
  auto g = build_padded(tape, raw, spec);
  Tensord pad_mask({384, 256, 3});
  for (int y = 0; y < 384; ++y)
    for (int x = 0; x < 256; ++x)
      if (x < 64 || x >= 192)
        for (int c = 0; c < 3; ++c) pad_mask.at3(y, x, c) = 1.0;
  NodeId pad_sum = tape.sum_all(tape.mul(g.output, tape.constant(pad_mask)));

  ad::Bindings<double> bind{{raw, as_real<double>(img)}};
  ad::Forward<double> fwd = ad::forward(tape, bind);
  auto grads = ad::gradient(tape, fwd, pad_sum, std::vector<NodeId>{raw});
  for (double v : grads[0].data) CHECK(v == 0.0);
}

TEST_CASE("fixed normalization hits the closed-form value") {
  const PreprocessSpec spec = PreprocessSpec::padded(32, 32);
  const ImageU8 img(32, 32, 255);
  const PreprocessResult r = reference_padded(img, spec);
  CHECK(r.tensor.at3(16, 16, 0) == doctest::Approx((1.0 - 0.485) / 0.229).epsilon(1e-5));
  CHECK(r.tensor.at3(16, 16, 1) == doctest::Approx((1.0 - 0.456) / 0.224).epsilon(1e-5));
  CHECK(r.tensor.at3(16, 16, 2) == doctest::Approx((1.0 - 0.406) / 0.225).epsilon(1e-5));
}

TEST_CASE("zero perturbation reproduces the clean pipeline bitwise") {
  const PreprocessSpec spec = PreprocessSpec::headered(160, 208, 16);
  const ImageU8 img = random_image(96, 64, 5);

  ad::Tape<float> t1;
  NodeId delta = t1.input({96, 64, 3}, "delta");
  NodeId adv = apply_perturbation(t1, as_real<float>(img), delta);
  auto g1 = build_headered(t1, adv, "what is the date?", spec);
  ad::Bindings<float> b1{{delta, Tensorf({96, 64, 3})}};
  const Tensorf with_zero = ad::forward(t1, b1).value(g1.output);

  ad::Tape<float> t2;
  NodeId clean = t2.constant(as_real<float>(img), "clean");
  auto g2 = build_headered(t2, clean, "what is the date?", spec);
  const Tensorf direct = ad::forward(t2, {}).value(g2.output);

  REQUIRE(with_zero.data.size() == direct.data.size());
  CHECK(std::memcmp(with_zero.data.data(), direct.data.data(),
                    sizeof(float) * direct.data.size()) == 0);
}

TEST_CASE("patch-supported perturbation stays inside its mapped footprint") {
  const PreprocessSpec spec = PreprocessSpec::headered(160, 208, 16);
  const ImageU8 img = random_image(96, 64, 6);

  // perturb a small square in the middle of the raw page
  const int r0 = 40, c0 = 24, side = 12;
  Tensorf delta({96, 64, 3});
  Rng rng(7);
  for (int y = r0; y < r0 + side; ++y)
    for (int x = c0; x < c0 + side; ++x)
      for (int c = 0; c < 3; ++c)
        delta.at3(y, x, c) = static_cast<float>(rng.uniform(-8.0, 8.0));

  ad::Tape<float> tape;
  NodeId d = tape.input({96, 64, 3}, "delta");
  NodeId adv = apply_perturbation(tape, as_real<float>(img), d);
  auto g = build_headered(tape, adv, "what is the date?", spec);

  ad::Bindings<float> zero{{d, Tensorf({96, 64, 3})}};
  ad::Bindings<float> with{{d, delta}};
  const Tensorf clean_out = ad::forward(tape, zero).value(g.output);
  const Tensorf pert_out = ad::forward(tape, with).value(g.output);

  // map the patch corners through the geometry and allow a 1px halo;
  // samplewise statistics shift the whole tensor, so compare differences of
  // differences against the patch-free region's uniform offset
  const Geometry& geo = g.geometry;
  auto map_y = [&](double ry) { return (ry + 0.5) * geo.scale_y - 0.5 + geo.offset_y; };
  auto map_x = [&](double rx) { return (rx + 0.5) * geo.scale_x - 0.5 + geo.offset_x; };
  const double y_lo = std::floor(map_y(r0)) - 1, y_hi = std::ceil(map_y(r0 + side - 1)) + 1;
  const double x_lo = std::floor(map_x(c0)) - 1, x_hi = std::ceil(map_x(c0 + side - 1)) + 1;

  const float base_shift = pert_out.at3(200, 8, 0) - clean_out.at3(200, 8, 0);
  for (int y = 16; y < 208; y += 3)
    for (int x = 0; x < 160; x += 3) {
      if (y >= y_lo && y <= y_hi && x >= x_lo && x <= x_hi) continue;
      const float diff = pert_out.at3(y, x, 0) - clean_out.at3(y, x, 0);
      CHECK(std::abs(diff - base_shift) < 2e-3f);
    }
}

TEST_CASE("differentiable and reference pipelines agree") {
  for (int style = 0; style < 2; ++style) {
    const PreprocessSpec spec =
        style == 0 ? PreprocessSpec::headered(160, 208, 16) : PreprocessSpec::padded(160, 208);
    const ImageU8 img = random_image(96, 64, 11 + style);
    const PreprocessResult ref = reference_preprocess(img, "what is the total?", spec);

    ad::Tape<float> tape;
    NodeId raw = tape.constant(as_real<float>(img), "raw");
    auto g = build_preprocess(tape, raw, "what is the total?", spec);
    const Tensorf mine = ad::forward(tape, {}).value(g.output);

    REQUIRE(mine.shape == ref.tensor.shape);
    for (std::size_t i = 0; i < mine.data.size(); ++i)
      CHECK(mine.data[i] == doctest::Approx(ref.tensor.data[i]).epsilon(1e-5));
  }
}

TEST_CASE("oversized questions are rejected") {
  const PreprocessSpec spec = PreprocessSpec::headered(64, 96, 16);
  const ImageU8 img = random_image(48, 32, 12);
  CHECK_THROWS_WITH_AS(reference_headered(img, "what is the provider name?", spec),
                       doctest::Contains("wider"), std::invalid_argument);
}

TEST_CASE("spec validation rejects degenerate extents") {
  PreprocessSpec spec = PreprocessSpec::padded(64, 96);
  spec.target_width = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  PreprocessSpec h = PreprocessSpec::headered(64, 96, 16);
  h.header_height = 96;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  PreprocessSpec f = PreprocessSpec::padded(64, 96);
  f.fixed_std = {0.0, 0.2, 0.2};
  CHECK_THROWS_AS(f.validate(), std::invalid_argument);
}
