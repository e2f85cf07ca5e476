#include "dvqa/preprocess.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dvqa/font5x7.hpp"

namespace dvqa {

PreprocessSpec PreprocessSpec::headered(int width, int height, int header) {
  PreprocessSpec s;
  s.style = PreprocessStyle::Headered;
  s.target_width = width;
  s.target_height = height;
  s.header_height = header;
  s.norm = NormMode::Samplewise;
  s.validate();
  return s;
}

PreprocessSpec PreprocessSpec::padded(int width, int height) {
  PreprocessSpec s;
  s.style = PreprocessStyle::Padded;
  s.target_width = width;
  s.target_height = height;
  s.norm = NormMode::Fixed;
  s.validate();
  return s;
}

void PreprocessSpec::validate() const {
  if (target_width <= 0 || target_height <= 0)
    throw std::invalid_argument("preprocess: degenerate target extents");
  if (style == PreprocessStyle::Headered &&
      (header_height <= 0 || header_height >= target_height))
    throw std::invalid_argument("preprocess: header height must lie inside the target height");
  for (double s : fixed_std)
    if (s <= 0.0) throw std::invalid_argument("preprocess: std components must be positive");
  if (std_floor <= 0.0) throw std::invalid_argument("preprocess: std floor must be positive");
}

Tensorf render_header_band(const std::string& question, int width, int header_height) {
  for (char c : question)
    if (!font::has_glyph(c))
      throw std::invalid_argument(std::string("header: no glyph for character '") + c + "'");
  const int margin = 2;
  const int usable = width - 2 * margin;

  // single line when it fits, otherwise wrap once near the middle
  std::vector<std::string> lines{question};
  if (font::text_width(question, 1) > usable) {
    const std::size_t mid = question.size() / 2;
    std::size_t split = std::string::npos;
    for (std::size_t off = 0; off <= mid; ++off) {
      if (mid >= off && question[mid - off] == ' ') { split = mid - off; break; }
      if (mid + off < question.size() && question[mid + off] == ' ') { split = mid + off; break; }
    }
    if (split == std::string::npos)
      throw std::invalid_argument("header: question \"" + question +
                                  "\" is wider than the canvas");
    lines = {question.substr(0, split), question.substr(split + 1)};
  }
  const int line_pitch = font::kGlyphHeight + 1;
  if (static_cast<int>(lines.size()) * line_pitch - 1 > header_height)
    throw std::invalid_argument("header: question \"" + question +
                                "\" does not fit the header band");
  for (const std::string& line : lines)
    if (font::text_width(line, 1) > usable)
      throw std::invalid_argument("header: question \"" + question +
                                  "\" is wider than the canvas");

  std::vector<std::uint8_t> band(static_cast<std::size_t>(header_height) * width * 3, 255);
  const int block = static_cast<int>(lines.size()) * line_pitch - 1;
  int y = std::max(0, (header_height - block) / 2);
  for (const std::string& line : lines) {
    font::draw_text(band, header_height, width, 3, margin, y, line, 1, 0);
    y += line_pitch;
  }

  Tensorf out({header_height, width, 3});
  for (std::size_t i = 0; i < band.size(); ++i) out.data[i] = static_cast<float>(band[i]);
  return out;
}

namespace {

// Independent double-precision bilinear resize, same half-pixel convention as
// the tape kernel.
std::vector<double> resize_bilinear(const std::vector<double>& src, int ih, int iw, int oh,
                                    int ow) {
  std::vector<double> out(static_cast<std::size_t>(oh) * ow * 3);
  const double sy = static_cast<double>(ih) / oh;
  const double sx = static_cast<double>(iw) / ow;
  for (int y = 0; y < oh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(ih - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, ih - 1);
    const double wy = fy - y0;
    for (int x = 0; x < ow; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(iw - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, iw - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        auto at = [&](int yy, int xx) {
          return src[(static_cast<std::size_t>(yy) * iw + xx) * 3 + c];
        };
        out[(static_cast<std::size_t>(y) * ow + x) * 3 + c] =
            (1.0 - wy) * ((1.0 - wx) * at(y0, x0) + wx * at(y0, x1)) +
            wy * ((1.0 - wx) * at(y1, x0) + wx * at(y1, x1));
      }
    }
  }
  return out;
}

std::vector<double> to_double(const ImageU8& image) {
  std::vector<double> v(image.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(image.pixels[i]);
  return v;
}

Tensorf finish_norm(std::vector<double> canvas, int H, int W, const PreprocessSpec& spec,
                    int stats_row0, int stats_rows) {
  if (spec.norm == NormMode::Fixed) {
    for (std::size_t i = 0; i < canvas.size(); ++i) {
      const int c = static_cast<int>(i % 3);
      canvas[i] = (canvas[i] / 255.0 - spec.fixed_mean[c]) / spec.fixed_std[c];
    }
  } else {
    const std::size_t lo = static_cast<std::size_t>(stats_row0) * W * 3;
    const std::size_t hi = lo + static_cast<std::size_t>(stats_rows) * W * 3;
    double mean = 0.0;
    for (std::size_t i = lo; i < hi; ++i) mean += canvas[i];
    mean /= static_cast<double>(hi - lo);
    double var = 0.0;
    for (std::size_t i = lo; i < hi; ++i) var += (canvas[i] - mean) * (canvas[i] - mean);
    var /= static_cast<double>(hi - lo);
    const double std_g = std::max(std::sqrt(var), spec.std_floor);
    for (auto& v : canvas) v = (v - mean) / std_g;
  }
  Tensorf out({H, W, 3});
  for (std::size_t i = 0; i < canvas.size(); ++i) out.data[i] = static_cast<float>(canvas[i]);
  return out;
}

}  // namespace

PreprocessResult reference_headered(const ImageU8& image, const std::string& question,
                                    const PreprocessSpec& spec) {
  spec.validate();
  const int W = spec.target_width, H = spec.target_height, hh = spec.header_height;
  const int dh = H - hh;

  PreprocessResult r;
  r.geometry = {image.height, image.width, dh, W, hh, 0,
                static_cast<double>(dh) / image.height, static_cast<double>(W) / image.width};

  std::vector<double> body = resize_bilinear(to_double(image), image.height, image.width, dh, W);
  Tensorf band = render_header_band(question, W, hh);

  std::vector<double> canvas(static_cast<std::size_t>(H) * W * 3);
  for (std::size_t i = 0; i < band.data.size(); ++i) canvas[i] = static_cast<double>(band.data[i]);
  std::copy(body.begin(), body.end(), canvas.begin() + static_cast<std::ptrdiff_t>(band.data.size()));

  r.header_mask = Tensorf({H, W, 3});
  std::fill(r.header_mask.data.begin(),
            r.header_mask.data.begin() + static_cast<std::ptrdiff_t>(band.data.size()), 1.0f);

  const int stats_row0 = spec.header_in_stats ? 0 : hh;
  const int stats_rows = spec.header_in_stats ? H : dh;
  r.tensor = finish_norm(std::move(canvas), H, W, spec, stats_row0, stats_rows);
  return r;
}

PreprocessResult reference_padded(const ImageU8& image, const PreprocessSpec& spec) {
  spec.validate();
  const int W = spec.target_width, H = spec.target_height;
  const double scale =
      std::min(static_cast<double>(W) / image.width, static_cast<double>(H) / image.height);
  const int sh = std::clamp(static_cast<int>(std::lround(image.height * scale)), 1, H);
  const int sw = std::clamp(static_cast<int>(std::lround(image.width * scale)), 1, W);
  const int pad_top = (H - sh) / 2;
  const int pad_left = (W - sw) / 2;

  PreprocessResult r;
  r.geometry = {image.height, image.width, sh, sw, pad_top, pad_left,
                static_cast<double>(sh) / image.height, static_cast<double>(sw) / image.width};

  std::vector<double> body = resize_bilinear(to_double(image), image.height, image.width, sh, sw);
  std::vector<double> canvas(static_cast<std::size_t>(H) * W * 3, 0.0);
  for (int y = 0; y < sh; ++y)
    for (int x = 0; x < sw; ++x)
      for (int c = 0; c < 3; ++c)
        canvas[(static_cast<std::size_t>(pad_top + y) * W + (pad_left + x)) * 3 + c] =
            body[(static_cast<std::size_t>(y) * sw + x) * 3 + c];

  r.header_mask = Tensorf({H, W, 3});
  r.tensor = finish_norm(std::move(canvas), H, W, spec, 0, H);
  return r;
}

PreprocessResult reference_preprocess(const ImageU8& image, const std::string& question,
                                      const PreprocessSpec& spec) {
  return spec.style == PreprocessStyle::Headered ? reference_headered(image, question, spec)
                                                 : reference_padded(image, spec);
}

}  // namespace dvqa
