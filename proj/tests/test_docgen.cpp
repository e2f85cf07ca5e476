#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "dvqa/docgen.hpp"

using namespace dvqa;

namespace {

DocumentSpec base_spec() {
  DocumentSpec spec;
  spec.fields["provider"] = "ACME CORP";
  spec.fields["invoice_id"] = "8176";
  spec.fields["date"] = "03/14/24";
  spec.fields["total"] = "$841.20";
  spec.fields["pages"] = "3";
  spec.layout_seed = 42;
  return spec;
}

}  // namespace

TEST_CASE("field values echo into the QA pairs") {
  DocumentSpec spec = base_spec();
  spec.fields["total"] = "$0.00";
  const RasterDocument doc = render_document(spec);
  REQUIRE(doc.qa.size() == kQaPairsPerDocument);
  bool found_total = false, found_id = false;
  for (const QAPair& qa : doc.qa) {
    if (qa.question == "what is the total?") {
      CHECK(qa.answer == "$0.00");
      found_total = true;
    }
    if (qa.question == "what is the invoice id?") {
      CHECK(qa.answer == "8176");
      found_id = true;
    }
  }
  CHECK(found_total);
  CHECK(found_id);
}

TEST_CASE("rendering is deterministic") {
  const RasterDocument a = render_document(base_spec());
  const RasterDocument b = render_document(base_spec());
  CHECK(a.image.pixels == b.image.pixels);
}

TEST_CASE("glyphs are hard-edged: pixel values stay in {0, 255}") {
  const RasterDocument doc = render_document(base_spec());
  for (std::uint8_t v : doc.image.pixels) CHECK((v == 0 || v == 255));
}

TEST_CASE("overflowing text is rejected with the field name") {
  DocumentSpec spec = base_spec();
  spec.fields["provider"] = "A VERY LONG PROVIDER NAME INDEED";
  CHECK_THROWS_WITH_AS(render_document(spec), doctest::Contains("provider"),
                       std::invalid_argument);
}

TEST_CASE("missing glyph is rejected") {
  DocumentSpec spec = base_spec();
  spec.fields["provider"] = "ACME & CO";  // ampersand is not in the glyph set
  CHECK_THROWS_AS(render_document(spec), std::invalid_argument);
}

TEST_CASE("make_dataset is reproducible and collision-free") {
  const auto once = make_dataset(1, 7);
  const auto again = make_dataset(1, 7);
  CHECK(once[0].image.pixels == again[0].image.pixels);

  const auto docs = make_dataset(64, 7);
  REQUIRE(docs.size() == 64);
  std::set<std::string> tuples;
  for (const RasterDocument& doc : docs) {
    std::string key;
    for (const QAPair& qa : doc.qa) key += qa.answer + "|";
    tuples.insert(key);
    CHECK(doc.qa.size() == kQaPairsPerDocument);
  }
  CHECK(tuples.size() == docs.size());

  const auto other = make_dataset(2, 8);
  CHECK(other[0].image.pixels != docs[0].image.pixels);
}

TEST_CASE("every answer is drawn from the rendered field map") {
  for (const RasterDocument& doc : make_dataset(8, 3)) {
    for (const QAPair& qa : doc.qa) {
      CHECK(!qa.answer.empty());
      for (char c : qa.answer) {
        const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                        (c >= '0' && c <= '9') || c == ' ' || c == '$' || c == '.' || c == ',' ||
                        c == '/' || c == '\'' || c == '-';
        CHECK(ok);
      }
    }
  }
}

TEST_CASE("integer tensor conversions round trip") {
  const RasterDocument doc = render_document(base_spec());
  const Tensorf t = to_float_tensor(doc.image);
  CHECK(t.shape == Shape{doc.image.height, doc.image.width, 3});
  const ImageU8 back = to_image_u8(t);
  CHECK(back.pixels == doc.image.pixels);

  Tensorf bad = t;
  bad.data[0] = 0.5f;
  CHECK_THROWS_AS(to_image_u8(bad), std::invalid_argument);
}
