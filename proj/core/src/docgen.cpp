#include "dvqa/docgen.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "dvqa/font5x7.hpp"
#include "dvqa/rng.hpp"

namespace dvqa {

namespace {

constexpr int kScale = 2;
constexpr int kMargin = 4;
constexpr int kJitter = 4;
// Values render monospaced at a 16px pitch so a half-scale preprocess lands
// one character per 8px patch.
constexpr int kValueAdvance = 8;

struct FieldLayout {
  const char* key;
  const char* label;
  const char* question;
};

constexpr FieldLayout kLayout[kQaPairsPerDocument] = {
    {"provider", "PROVIDER:", "what is the provider name?"},
    {"invoice_id", "INVOICE NO:", "what is the invoice id?"},
    {"date", "DATE:", "what is the date?"},
    {"total", "TOTAL:", "what is the total?"},
    {"pages", "PAGES:", "how many pages?"},
};

const std::array<const char*, 24> kProviders = {
    "ACME CORP", "ZEN TRADE", "OAK GOODS", "IRON LABS", "BLUE FUEL", "NOVA WIRE",
    "ECHO TOOL", "ATLAS GAS", "DELTA INK", "GAMMA OIL", "VISTA AIR", "POLAR ICE",
    "CEDAR LOG", "TIDE MILL", "UNION TEA", "WREN FARM", "HAZEL OAT", "JUNO SODA",
    "MAPLE JAM", "ONYX COAL", "RAPID VAN", "SOLAR HAT", "KEST MART", "PINE DOCK",
};

std::string two_digits(std::uint64_t v) {
  std::string s = std::to_string(v);
  return s.size() < 2 ? "0" + s : s;
}

}  // namespace

DocumentSpec random_spec(std::uint64_t seed) {
  Rng rng(seed);
  DocumentSpec spec;
  spec.fields["provider"] = kProviders[rng.uniform_int(kProviders.size())];
  spec.fields["invoice_id"] = std::to_string(1000 + rng.uniform_int(9000));
  spec.fields["date"] = two_digits(1 + rng.uniform_int(12)) + "/" +
                        two_digits(1 + rng.uniform_int(28)) + "/" +
                        two_digits(20 + rng.uniform_int(10));
  spec.fields["total"] =
      "$" + std::to_string(rng.uniform_int(1000)) + "." + two_digits(rng.uniform_int(100));
  spec.fields["pages"] = std::to_string(1 + rng.uniform_int(9));
  spec.layout_seed = rng.next_u64();
  return spec;
}

RasterDocument render_document(const DocumentSpec& spec) {
  const int W = spec.canvas_width, H = spec.canvas_height;
  RasterDocument doc;
  doc.image = ImageU8(H, W, 255);

  for (const FieldLayout& f : kLayout) {
    auto it = spec.fields.find(f.key);
    if (it == spec.fields.end() || it->second.empty())
      throw std::invalid_argument(std::string("render_document: missing field ") + f.key);
    for (char c : it->second)
      if (!font::has_glyph(c))
        throw std::invalid_argument(std::string("render_document: field ") + f.key +
                                    " has no glyph for '" + c + "'");
  }

  Rng jitter(spec.layout_seed);
  auto draw_line = [&](const std::string& text, int x, int y, int advance, const char* field) {
    const int w = font::text_width(text, kScale, advance);
    if (x < 0 || y < 0 || x + w > W - kMargin || y + font::kGlyphHeight * kScale > H - kMargin)
      throw std::invalid_argument(std::string("render_document: field ") + field +
                                  " overflows the canvas");
    font::draw_text(doc.image.pixels, H, W, 3, x, y, text, kScale, 0, advance);
  };

  // label row plus a monospaced value row per field, jittered together. Value
  // rows start on 16px grid lines and the jitter is quantized to even pixels,
  // so a half-scale preprocess sees each character as a crisp pattern inside
  // its 8px patch instead of a continuum of interpolation blurs.
  const int x0 = W / 16 + 2;
  draw_line("INVOICE", x0, H / 24, font::kAdvance, "title");
  int index = 0;
  for (const FieldLayout& f : kLayout) {
    const int jx = 2 * (static_cast<int>(jitter.uniform_int(kJitter + 1)) - kJitter / 2);
    const int jy = 2 * (static_cast<int>(jitter.uniform_int(kJitter + 1)) - kJitter / 2);
    const int label_y = H * (3 + 4 * index) / 24;
    draw_line(f.label, x0 + jx, label_y + jy, font::kAdvance, f.key);
    draw_line(spec.fields.at(f.key), x0 + jx, label_y + H / 24 + jy, kValueAdvance, f.key);
    doc.qa.push_back({f.question, spec.fields.at(f.key)});
    ++index;
  }
  return doc;
}

std::vector<RasterDocument> make_dataset(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("make_dataset: n must be >= 1");
  std::vector<RasterDocument> docs;
  std::set<std::string> seen;
  std::uint64_t draw = 0;
  for (int i = 0; i < n; ++i) {
    DocumentSpec spec;
    for (int tries = 0;; ++tries) {
      if (tries > 1000) throw std::runtime_error("make_dataset: field space exhausted");
      spec = random_spec(Rng::mix(seed, draw++));
      std::string key;
      for (const auto& [k, v] : spec.fields) key += k + "=" + v + ";";
      if (seen.insert(key).second) break;
    }
    RasterDocument doc = render_document(spec);
    doc.id = i;
    docs.push_back(std::move(doc));
  }
  return docs;
}

void save_dataset(const std::vector<RasterDocument>& docs, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::array();
  for (const RasterDocument& doc : docs) {
    char name[32];
    std::snprintf(name, sizeof(name), "doc_%04d.png", doc.id);
    write_png(dir + "/" + name, doc.image);
    nlohmann::json entry;
    entry["id"] = doc.id;
    entry["file"] = name;
    entry["qa"] = nlohmann::json::array();
    for (const QAPair& qa : doc.qa) entry["qa"].push_back({{"question", qa.question}, {"answer", qa.answer}});
    manifest.push_back(entry);
  }
  std::ofstream f(dir + "/manifest.json");
  if (!f) throw std::runtime_error("save_dataset: cannot write manifest in " + dir);
  f << manifest.dump(2) << "\n";
}

Tensorf to_float_tensor(const ImageU8& image) {
  Tensorf t({image.height, image.width, 3});
  for (std::size_t i = 0; i < image.pixels.size(); ++i)
    t.data[i] = static_cast<float>(image.pixels[i]);
  return t;
}

ImageU8 to_image_u8(const Tensorf& tensor) {
  if (tensor.rank() != 3 || tensor.shape[2] != 3)
    throw std::invalid_argument("to_image_u8: expected [H,W,3], got " + shape_str(tensor.shape));
  ImageU8 img(tensor.shape[0], tensor.shape[1]);
  for (std::size_t i = 0; i < tensor.data.size(); ++i) {
    const float v = tensor.data[i];
    if (v < 0.0f || v > 255.0f || v != std::nearbyint(v))
      throw std::invalid_argument("to_image_u8: value " + std::to_string(v) +
                                  " is not an 8-bit intensity");
    img.pixels[i] = static_cast<std::uint8_t>(v);
  }
  return img;
}

}  // namespace dvqa
