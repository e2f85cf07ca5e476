#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dvqa/attack.hpp"
#include "dvqa/model_graph.hpp"
#include "dvqa/rng.hpp"

using namespace dvqa;

namespace {

ModelConfig tiny_victim() {
  ModelConfig c;
  c.embed_dim = 16;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.max_answer_len = 16;
  c.question_mode = QuestionMode::Headered;
  c.preprocess = PreprocessSpec::headered(160, 96, 16);
  return c;
}

RasterDocument doc_fixture(std::uint64_t seed = 2024) {
  DocumentSpec spec = random_spec(seed);
  RasterDocument doc = render_document(spec);
  doc.id = 0;
  return doc;
}

Tensorf random_delta(const Shape& shape, double lo, double hi, std::uint64_t seed) {
  Rng rng(seed);
  Tensorf t(shape);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

}  // namespace

TEST_CASE("projection clamps the budget, the box, and the support") {
  Tensorf x({1, 1, 3});
  x.data = {100.0f, 250.0f, 50.0f};
  Tensorf d({1, 1, 3});
  d.data = {12.0f, 8.0f, -3.0f};
  FeasibleSet fs;
  fs.epsilon = 8.0;

  Tensorf p = project(d, x, fs);
  CHECK(p.data[0] == 8.0f);   // budget clamp
  CHECK(p.data[1] == 5.0f);   // box clamp at 255
  CHECK(p.data[2] == -3.0f);  // untouched

  // idempotence
  const Tensorf pp = project(p, x, fs);
  CHECK(pp.data == p.data);
}

TEST_CASE("projection zeroes the complement of the patch") {
  Tensorf x({4, 4, 3}, 100.0f);
  Tensorf d = random_delta({4, 4, 3}, -5.0, 5.0, 1);
  FeasibleSet fs;
  fs.epsilon = 8.0;
  fs.mask = PatchRect{2, 2, 2, 2};
  const Tensorf p = project(d, x, fs);
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 4; ++xx)
      for (int c = 0; c < 3; ++c) {
        if (y >= 2 && xx >= 2)
          CHECK(p.at3(y, xx, c) == d.at3(y, xx, c));
        else
          CHECK(p.at3(y, xx, c) == 0.0f);
      }
}

TEST_CASE("quantization rounds onto the integer grid, ties away from clean") {
  Tensorf x({1, 1, 3});
  x.data = {100.0f, 100.0f, 100.0f};
  Tensorf d({1, 1, 3});
  d.data = {3.6f, -0.5f, 0.4f};
  const Tensorf q = quantize_step(x, d);
  CHECK(q.data[0] == 4.0f);
  CHECK(q.data[1] == -1.0f);
  CHECK(q.data[2] == 0.0f);

  Tensorf frac = x;
  frac.data[0] = 100.25f;
  CHECK_THROWS_AS(quantize_step(frac, d), std::invalid_argument);
}

TEST_CASE("project then quantize keeps every invariant across budgets") {
  Rng rng(42);
  Tensorf x({6, 5, 3});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform_int(256));
  for (double eps : {8.0, 32.0, 96.0}) {
    FeasibleSet fs;
    fs.epsilon = eps;
    fs.mask = PatchRect{3, 2, 3, 3};
    for (int it = 0; it < 500; ++it) {
      Tensorf d = random_delta({6, 5, 3}, -2.0 * eps, 2.0 * eps, rng.next_u64());
      const Tensorf q = quantize_step(x, project(d, x, fs));
      CHECK(check_feasibility(q, x, fs).all());
    }
  }
}

TEST_CASE("patch region arithmetic") {
  const PatchRect r = patch_region(384, 256, 0.15);  // floor(0.15 * 256) = 38
  CHECK(r.height == 38);
  CHECK(r.width == 38);
  CHECK(r.row0 == 346);
  CHECK(r.col0 == 218);

  const PatchRect big = patch_region(100, 100, 0.99);
  CHECK(big.row0 >= 0);
  CHECK(big.col0 >= 0);
  CHECK(big.row0 + big.height <= 100);
  CHECK(big.col0 + big.width <= 100);

  CHECK_THROWS_AS(patch_region(4, 4, 0.1), std::invalid_argument);  // side < 1
  CHECK_THROWS_AS(patch_region(100, 100, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(patch_region(100, 100, 0.0), std::invalid_argument);
}

TEST_CASE("scenario builder wires targets, gamma, and rejections") {
  const RasterDocument doc = doc_fixture();

  const AttackScenario single = build_scenario(ScenarioKind::TargetedSingle, doc, 1,
                                               default_target_pool());
  CHECK(single.gamma == 1);
  CHECK(single.qa_indices == std::vector<int>{0});
  CHECK(single.targets == std::vector<std::string>{"No Answer"});

  const AttackScenario doa = build_scenario(ScenarioKind::DenialOfAnswer, doc, 5,
                                            default_target_pool());
  CHECK(doa.gamma == -1);
  REQUIRE(doa.targets.size() == 5);
  for (int j = 0; j < 5; ++j) CHECK(doa.targets[j] == doc.qa[j].answer);

  const std::vector<std::string> pool = default_target_pool();
  CHECK_THROWS_AS(build_scenario(ScenarioKind::TargetedMulti, doc, 6, pool),
                  std::invalid_argument);
  const std::vector<std::string> small_pool{"No Answer", "Unclear"};
  CHECK_THROWS_AS(build_scenario(ScenarioKind::TargetedMulti, doc, 3, small_pool),
                  std::invalid_argument);
}

TEST_CASE("per-style attack defaults") {
  const AttackDefaults hf = attack_defaults(QuestionMode::Headered, false);
  CHECK(hf.loss == LossKind::Nll);
  CHECK(hf.epsilon == 8.0);
  CHECK(hf.alpha == 2.0);
  CHECK(hf.steps == 20);
  const AttackDefaults hp = attack_defaults(QuestionMode::Headered, true);
  CHECK(hp.epsilon == 96.0);
  CHECK(hp.alpha == 24.0);
  CHECK(hp.steps == 25);
  const AttackDefaults pf = attack_defaults(QuestionMode::Prompted, false);
  CHECK(pf.loss == LossKind::LogitMargin);
  CHECK(pf.epsilon == 32.0);
  CHECK(pf.steps == 100);
  const AttackDefaults pp = attack_defaults(QuestionMode::Prompted, true);
  CHECK(pp.epsilon == 96.0);
  CHECK(pp.alpha == 24.0);
  CHECK(pp.steps == 100);
}

TEST_CASE("objective sign flip and additivity") {
  const RasterDocument doc = doc_fixture();
  const ModelParams params = init_params(tiny_victim(), 7);
  const Tensorf zero(Shape{doc.image.height, doc.image.width, 3});

  AttackScenario doa = build_scenario(ScenarioKind::DenialOfAnswer, doc, 2,
                                      default_target_pool());
  AttackScenario targeted = doa;
  targeted.kind = ScenarioKind::TargetedMulti;
  targeted.gamma = 1;  // same targets (the ground truths), opposite sign

  const double plus = nll_objective(params, doc, targeted, zero);
  const double minus = nll_objective(params, doc, doa, zero);
  CHECK(minus == doctest::Approx(-plus).epsilon(1e-6));

  // B = 2 objective equals the sum of the two single-pair objectives
  AttackScenario first = targeted, second = targeted;
  first.kind = ScenarioKind::TargetedSingle;
  first.qa_indices = {0};
  first.targets = {targeted.targets[0]};
  second.kind = ScenarioKind::TargetedSingle;
  second.qa_indices = {1};
  second.targets = {targeted.targets[1]};
  const double split = nll_objective(params, doc, first, zero) +
                       nll_objective(params, doc, second, zero);
  CHECK(plus == doctest::Approx(split).epsilon(1e-5));
}

TEST_CASE("denial of answer refuses the margin loss") {
  const RasterDocument doc = doc_fixture();
  AttackScenario doa = build_scenario(ScenarioKind::DenialOfAnswer, doc, 1,
                                      default_target_pool());
  doa.loss = LossKind::LogitMargin;
  CHECK_THROWS_AS(doa.validate(doc), std::invalid_argument);
}

TEST_CASE("margin loss is zero exactly when every position already wins") {
  // direct substitution on a two-position logit matrix
  ad::Tape<double> tape;
  Tensord z({2, 4});
  z.data = {5.0, 3.0, 1.0, 0.0,   // argmax 0, target 1 -> 2.0
            0.0, 7.0, 1.0, 0.0};  // argmax = target 1 -> 0
  const std::vector<int> targets{1, 1};
  ad::NodeId loss = margin_from_logits(tape, tape.constant(z), targets);
  CHECK(ad::forward(tape, {}).value(loss).data[0] == doctest::Approx(2.0));

  Tensord win({2, 4});
  win.data = {0.0, 9.0, 1.0, 0.0, 0.0, 4.0, 1.0, 0.0};
  ad::Tape<double> tape2;
  ad::NodeId loss2 = margin_from_logits(tape2, tape2.constant(win), targets);
  CHECK(ad::forward(tape2, {}).value(loss2).data[0] == doctest::Approx(0.0));
}

TEST_CASE("margin loss through the model matches per-row evaluation") {
  const RasterDocument doc = doc_fixture();
  const ModelParams params = init_params(tiny_victim(), 9);
  const Tensorf zero(Shape{doc.image.height, doc.image.width, 3});
  const Vocabulary& vocab = Vocabulary::standard();

  for (const std::string& target : {std::string("No Answer"), std::string("Retry"),
                                    doc.qa[0].answer}) {
    const double loss = logit_margin_loss(params, doc, doc.qa[0].question, target, zero);

    // independent evaluation: teacher-forced logits through the same
    // differentiable route, case clause applied row by row
    const std::vector<int> tgt = vocab.tokenize_target(target);
    std::vector<int> input(tgt.size());
    input[0] = Vocabulary::kBos;
    for (std::size_t i = 1; i < input.size(); ++i) input[i] = tgt[i - 1];

    ad::Tape<float> tape;
    ad::Bindings<float> bind;
    ParamBinder<float> p(tape, bind, params);
    ad::NodeId clean = tape.constant(to_float_tensor(doc.image), "clean");
    auto pre = build_headered(tape, clean, doc.qa[0].question, params.config.preprocess);
    ad::NodeId H = build_encoder(tape, p, pre.output, nullptr, params.config);
    ad::NodeId Z = build_decoder_logits(tape, p, H, input, params.config);
    const Tensorf logits = ad::forward(tape, bind).value(Z);

    double want = 0.0;
    bool all_match = true;
    for (std::size_t t = 0; t < tgt.size(); ++t) {
      int arg = 0;
      for (int v = 1; v < vocab.size(); ++v)
        if (logits.at2(static_cast<int>(t), v) > logits.at2(static_cast<int>(t), arg)) arg = v;
      if (arg != tgt[t]) {
        all_match = false;
        want += logits.at2(static_cast<int>(t), arg) - logits.at2(static_cast<int>(t), tgt[t]);
      }
    }
    CHECK(loss == doctest::Approx(want).epsilon(1e-5));
    CHECK((loss == 0.0) == all_match);
  }
}

TEST_CASE("gradients reach the perturbation") {
  const RasterDocument doc = doc_fixture();
  const ModelParams params = init_params(tiny_victim(), 11);
  AttackScenario s = build_scenario(ScenarioKind::TargetedSingle, doc, 1, default_target_pool());
  s.steps = 1;
  s.alpha = 2.0;
  FeasibleSet fs;
  fs.epsilon = 8.0;

  const AttackResult r = pgd_attack(params, doc, s, fs, 5);
  double moved = 0.0;
  for (float v : r.delta.data) moved += std::abs(v);
  CHECK(moved > 0.0);  // the sign step moved at least some pixels
  CHECK(check_feasibility(r.delta, r.clean, fs).all());
  CHECK(r.loss_trajectory.size() == 2);
}

TEST_CASE("epsilon zero is the null attack") {
  const RasterDocument doc = doc_fixture();
  const ModelParams params = init_params(tiny_victim(), 13);
  AttackScenario s = build_scenario(ScenarioKind::TargetedSingle, doc, 1, default_target_pool());
  s.steps = 3;
  FeasibleSet fs;
  fs.epsilon = 0.0;

  const AttackResult r = pgd_attack(params, doc, s, fs, 5);
  for (float v : r.delta.data) CHECK(v == 0.0f);
  const ImageU8 adv = r.adversarial_image();
  CHECK(adv.pixels == doc.image.pixels);
  // success iff the clean answer already matches the target
  const std::string clean_answer = answer(params, doc.image, doc.qa[0].question);
  CHECK(r.success == (clean_answer == s.targets[0]));
}

TEST_CASE("patch attack keeps the support inside the square") {
  const RasterDocument doc = doc_fixture();
  const ModelParams params = init_params(tiny_victim(), 17);
  AttackScenario s = build_scenario(ScenarioKind::TargetedSingle, doc, 1, default_target_pool());
  s.steps = 2;
  s.alpha = 24.0;
  FeasibleSet fs;
  fs.epsilon = 96.0;
  fs.mask = patch_region(doc, 0.15);

  const AttackResult r = pgd_attack(params, doc, s, fs, 5);
  CHECK(check_feasibility(r.delta, r.clean, fs).all());
  const ImageU8 adv = r.adversarial_image();
  bool touched = false;
  for (int y = 0; y < doc.image.height; ++y)
    for (int x = 0; x < doc.image.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const bool inside = y >= fs.mask->row0 && y < fs.mask->row0 + fs.mask->height &&
                            x >= fs.mask->col0 && x < fs.mask->col0 + fs.mask->width;
        if (adv.at(y, x, c) != doc.image.at(y, x, c)) {
          CHECK(inside);
          touched = true;
        }
      }
  CHECK(touched);
}
