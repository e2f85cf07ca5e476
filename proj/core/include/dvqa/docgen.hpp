#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dvqa/png_io.hpp"
#include "dvqa/tensor.hpp"

namespace dvqa {

// One invoice page worth of content. Field keys are fixed: provider,
// invoice_id, date, total, pages.
struct DocumentSpec {
  std::map<std::string, std::string> fields;
  std::uint64_t layout_seed = 0;
  int canvas_width = 256;
  int canvas_height = 384;
};

struct QAPair {
  std::string question;
  std::string answer;
};

struct RasterDocument {
  ImageU8 image;
  std::vector<QAPair> qa;
  int id = 0;
};

inline constexpr int kQaPairsPerDocument = 5;

// Deterministic raster of the spec: white page, black 5x7 glyphs at 2x, field
// jitter of +/-4 px drawn from the layout seed. Throws std::invalid_argument
// naming the field when a value cannot be drawn or does not fit.
RasterDocument render_document(const DocumentSpec& spec);

DocumentSpec random_spec(std::uint64_t seed);

// n distinct documents (field tuples never repeat), reproducible from seed.
std::vector<RasterDocument> make_dataset(int n, std::uint64_t seed);

// PNG per document plus a manifest.json listing files and QA pairs.
void save_dataset(const std::vector<RasterDocument>& docs, const std::string& dir);

Tensorf to_float_tensor(const ImageU8& image);
ImageU8 to_image_u8(const Tensorf& tensor);

}  // namespace dvqa
