#include "dvqa/attack.hpp"

#include <cmath>
#include <stdexcept>

#include "dvqa/model_graph.hpp"

namespace dvqa {

void FeasibleSet::validate() const {
  if (epsilon < 0.0) throw std::invalid_argument("feasible set: epsilon must be non-negative");
  if (lower > upper) throw std::invalid_argument("feasible set: lower bound exceeds upper bound");
  if (mask && (mask->height < 1 || mask->width < 1 || mask->row0 < 0 || mask->col0 < 0))
    throw std::invalid_argument("feasible set: degenerate patch mask");
}

PatchRect patch_region(int height, int width, double fraction) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw std::invalid_argument("patch_region: fraction must lie in (0, 1)");
  const int side = static_cast<int>(std::floor(fraction * std::min(height, width)));
  if (side < 1) throw std::invalid_argument("patch_region: side collapses below one pixel");
  return {height - side, width - side, side, side};
}

PatchRect patch_region(const RasterDocument& doc, double fraction) {
  return patch_region(doc.image.height, doc.image.width, fraction);
}

namespace {

bool in_rect(const PatchRect& r, int y, int x) {
  return y >= r.row0 && y < r.row0 + r.height && x >= r.col0 && x < r.col0 + r.width;
}

void require_same_extents(const Tensorf& delta, const Tensorf& x, const char* what) {
  if (delta.shape != x.shape)
    throw std::invalid_argument(std::string(what) + ": delta extents " + shape_str(delta.shape) +
                                " do not match image " + shape_str(x.shape));
}

}  // namespace

Tensorf project(const Tensorf& delta, const Tensorf& x, const FeasibleSet& fs) {
  fs.validate();
  require_same_extents(delta, x, "project");
  Tensorf out = delta;
  const float eps = static_cast<float>(fs.epsilon);
  const float lb = static_cast<float>(fs.lower), ub = static_cast<float>(fs.upper);
  const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
  std::size_t i = 0;
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int ch = 0; ch < c; ++ch, ++i) {
        float d = std::clamp(out.data[i], -eps, eps);
        // move onto the box boundary only when violated; in-bounds components
        // pass through untouched so reprojection is exact
        const float v = x.data[i] + d;
        if (v < lb) d = lb - x.data[i];
        if (v > ub) d = ub - x.data[i];
        if (fs.mask && !in_rect(*fs.mask, y, xx)) d = 0.0f;
        out.data[i] = d;
      }
  return out;
}

Tensorf quantize_step(const Tensorf& x, const Tensorf& delta) {
  require_same_extents(delta, x, "quantize_step");
  for (float v : x.data)
    if (v != std::nearbyint(v))
      throw std::invalid_argument("quantize_step: clean image is not integer-valued");
  Tensorf out = delta;
  // Ties round away from the clean pixel value, so x + delta stays integral.
  for (auto& d : out.data) d = std::round(d);
  return out;
}

FeasibilityReport check_feasibility(const Tensorf& delta, const Tensorf& x,
                                    const FeasibleSet& fs) {
  require_same_extents(delta, x, "check_feasibility");
  FeasibilityReport r;
  const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
  std::size_t i = 0;
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < w; ++xx)
      for (int ch = 0; ch < c; ++ch, ++i) {
        const float d = delta.data[i];
        if (std::abs(d) > fs.epsilon) r.linf_ok = false;
        const float v = x.data[i] + d;
        if (v < fs.lower || v > fs.upper) r.box_ok = false;
        if (d != std::nearbyint(d)) r.integer_ok = false;
        if (fs.mask && !in_rect(*fs.mask, y, xx) && d != 0.0f) r.support_ok = false;
      }
  return r;
}

const std::vector<std::string>& default_target_pool() {
  static const std::vector<std::string> pool = {"No Answer", "Unclear", "Retry", "Try later",
                                                "I won't tell you"};
  return pool;
}

void AttackScenario::validate(const RasterDocument& doc) const {
  const int m = static_cast<int>(doc.qa.size());
  if (qa_indices.empty() || static_cast<int>(qa_indices.size()) > m)
    throw std::invalid_argument("scenario: need between 1 and M optimized pairs");
  for (int j : qa_indices)
    if (j < 0 || j >= m) throw std::invalid_argument("scenario: qa index out of range");
  if (targets.size() != qa_indices.size())
    throw std::invalid_argument("scenario: one target per optimized pair");
  const bool targeted = kind != ScenarioKind::DenialOfAnswer;
  if (gamma != (targeted ? 1 : -1))
    throw std::invalid_argument("scenario: gamma must be +1 for targeted kinds, -1 for denial");
  if (kind == ScenarioKind::TargetedSingle && qa_indices.size() != 1)
    throw std::invalid_argument("scenario: single-answer kind optimizes exactly one pair");
  if (kind == ScenarioKind::DenialOfAnswer && loss == LossKind::LogitMargin)
    throw std::invalid_argument("scenario: denial of answer runs on the NLL loss");
  for (const std::string& t : targets)
    if (!Vocabulary::standard().can_tokenize(t))
      throw std::invalid_argument("scenario: target \"" + t + "\" is not tokenizable");
  if (alpha <= 0.0) throw std::invalid_argument("scenario: alpha must be positive");
  if (steps < 0) throw std::invalid_argument("scenario: negative step count");
}

AttackScenario build_scenario(ScenarioKind kind, const RasterDocument& doc, int b,
                              std::span<const std::string> target_pool) {
  const int m = static_cast<int>(doc.qa.size());
  if (b < 1 || b > m)
    throw std::invalid_argument("build_scenario: B must lie in [1, M]");
  AttackScenario s;
  s.kind = kind;
  for (int j = 0; j < b; ++j) s.qa_indices.push_back(j);
  if (kind == ScenarioKind::DenialOfAnswer) {
    s.gamma = -1;
    s.loss = LossKind::Nll;
    for (int j = 0; j < b; ++j) s.targets.push_back(doc.qa[static_cast<std::size_t>(j)].answer);
  } else {
    s.gamma = 1;
    if (b > static_cast<int>(target_pool.size()))
      throw std::invalid_argument("build_scenario: target pool smaller than B");
    for (int j = 0; j < b; ++j) s.targets.push_back(target_pool[static_cast<std::size_t>(j)]);
    if (kind == ScenarioKind::TargetedSingle && b != 1)
      throw std::invalid_argument("build_scenario: single-answer kind needs B = 1");
  }
  s.validate(doc);
  return s;
}

AttackDefaults attack_defaults(QuestionMode style, bool patch) {
  if (style == QuestionMode::Headered)
    return patch ? AttackDefaults{LossKind::Nll, 96.0, 24.0, 25}
                 : AttackDefaults{LossKind::Nll, 8.0, 2.0, 20};
  return patch ? AttackDefaults{LossKind::LogitMargin, 96.0, 24.0, 100}
               : AttackDefaults{LossKind::LogitMargin, 32.0, 2.0, 100};
}

namespace {

// The attack objective as one tape from the perturbation input down to the
// summed per-pair loss, gamma applied.
struct ObjectiveGraph {
  ad::Tape<float> tape;
  ad::Bindings<float> bindings;
  ad::NodeId delta = -1;
  ad::NodeId objective = -1;
};

ObjectiveGraph build_objective(const ModelParams& params, const RasterDocument& doc,
                               const AttackScenario& scenario) {
  const ModelConfig& cfg = params.config;
  const Vocabulary& vocab = Vocabulary::standard();
  ObjectiveGraph g;
  Tensorf clean = to_float_tensor(doc.image);
  g.delta = g.tape.input(clean.shape, "delta");
  ad::NodeId adv = apply_perturbation(g.tape, clean, g.delta);

  ParamBinder<float> bindp(g.tape, g.bindings, params);
  ad::NodeId total = -1;
  for (std::size_t pos = 0; pos < scenario.qa_indices.size(); ++pos) {
    const QAPair& qa = doc.qa[static_cast<std::size_t>(scenario.qa_indices[pos])];
    const std::vector<int> target = vocab.tokenize_target(scenario.targets[pos]);

    ad::NodeId pre;
    std::vector<int> prompt;
    const std::vector<int>* prompt_ptr = nullptr;
    if (cfg.question_mode == QuestionMode::Headered) {
      pre = build_headered(g.tape, adv, qa.question, cfg.preprocess).output;
    } else {
      pre = build_padded(g.tape, adv, cfg.preprocess).output;
      prompt = question_tokens(qa.question);
      prompt_ptr = &prompt;
    }
    ad::NodeId loss = build_qa_loss(g.tape, bindp, pre, prompt_ptr, target, scenario.loss, cfg);
    total = total < 0 ? loss : g.tape.add(total, loss);
  }
  g.objective = scenario.gamma == 1 ? total : g.tape.scale(total, -1.0);
  return g;
}

double evaluate_objective(const ModelParams& params, const RasterDocument& doc,
                          const AttackScenario& scenario, const Tensorf& delta) {
  ObjectiveGraph g = build_objective(params, doc, scenario);
  g.bindings.emplace(g.delta, delta);
  return static_cast<double>(ad::forward(g.tape, g.bindings).value(g.objective).data[0]);
}

}  // namespace

double nll_objective(const ModelParams& params, const RasterDocument& doc,
                     const AttackScenario& scenario, const Tensorf& delta) {
  scenario.validate(doc);
  AttackScenario s = scenario;
  s.loss = LossKind::Nll;
  return evaluate_objective(params, doc, s, delta);
}

double logit_margin_loss(const ModelParams& params, const RasterDocument& doc,
                         const std::string& question, const std::string& target,
                         const Tensorf& delta) {
  int index = -1;
  for (std::size_t j = 0; j < doc.qa.size(); ++j)
    if (doc.qa[j].question == question) index = static_cast<int>(j);
  if (index < 0) throw std::invalid_argument("logit_margin_loss: question not on this document");
  AttackScenario s;
  s.kind = ScenarioKind::TargetedSingle;
  s.gamma = 1;
  s.loss = LossKind::LogitMargin;
  s.qa_indices = {index};
  s.targets = {target};
  s.alpha = 1.0;
  s.steps = 0;
  s.validate(doc);
  return evaluate_objective(params, doc, s, delta);
}

ImageU8 AttackResult::adversarial_image() const {
  Tensorf adv = clean;
  for (std::size_t i = 0; i < adv.data.size(); ++i) adv.data[i] += delta.data[i];
  return to_image_u8(adv);
}

AttackResult pgd_attack(const ModelParams& params, const RasterDocument& doc,
                        const AttackScenario& scenario, const FeasibleSet& fs, std::uint64_t seed,
                        const AttackOptions& options) {
  (void)seed;  // the iterate starts at zero; reserved for randomized restarts
  scenario.validate(doc);
  fs.validate();

  AttackResult result;
  result.clean = to_float_tensor(doc.image);
  result.delta = Tensorf(result.clean.shape);

  ObjectiveGraph g = build_objective(params, doc, scenario);
  const std::vector<ad::NodeId> wrt{g.delta};

  // Exact integer-domain caps; a no-op re-projection for integer budgets.
  const float eps_cap = std::floor(static_cast<float>(fs.epsilon));
  const float lb_cap = std::ceil(static_cast<float>(fs.lower));
  const float ub_cap = std::floor(static_cast<float>(fs.upper));

  for (int k = 0; k < scenario.steps; ++k) {
    g.bindings[g.delta] = result.delta;
    ad::Forward<float> fwd = ad::forward(g.tape, g.bindings);
    result.loss_trajectory.push_back(
        static_cast<double>(fwd.value(g.objective).data[0]));
    Tensorf grad = ad::gradient(g.tape, fwd, g.objective, wrt)[0];
    for (float v : grad.data)
      if (!std::isfinite(v))
        throw std::runtime_error("pgd_attack: non-finite gradient at iteration " +
                                 std::to_string(k));

    const float step = static_cast<float>(scenario.alpha);
    for (std::size_t i = 0; i < result.delta.data.size(); ++i) {
      const float gv = grad.data[i];
      result.delta.data[i] -= step * (gv > 0.0f ? 1.0f : (gv < 0.0f ? -1.0f : 0.0f));
    }

    result.delta = project(result.delta, result.clean, fs);
    result.delta = quantize_step(result.clean, result.delta);
    for (std::size_t i = 0; i < result.delta.data.size(); ++i) {
      float d = std::clamp(result.delta.data[i], -eps_cap, eps_cap);
      d = std::clamp(result.clean.data[i] + d, lb_cap, ub_cap) - result.clean.data[i];
      result.delta.data[i] = d;
    }

    if (options.enforce_invariants) {
      const FeasibilityReport rep = check_feasibility(result.delta, result.clean, fs);
      if (!rep.all())
        throw std::runtime_error("pgd_attack: feasibility violated at iteration " +
                                 std::to_string(k));
    }
  }

  g.bindings[g.delta] = result.delta;
  result.loss_trajectory.push_back(
      static_cast<double>(ad::forward(g.tape, g.bindings).value(g.objective).data[0]));

  // Free-running verdict on the saved 8-bit result, reference pipeline.
  const ImageU8 adv = result.adversarial_image();
  result.success = true;
  for (std::size_t pos = 0; pos < scenario.qa_indices.size(); ++pos) {
    const QAPair& qa = doc.qa[static_cast<std::size_t>(scenario.qa_indices[pos])];
    const std::string pred = answer(params, adv, qa.question);
    const bool ok = scenario.kind == ScenarioKind::DenialOfAnswer
                        ? pred != qa.answer
                        : pred == scenario.targets[pos];
    result.final_answers.push_back(pred);
    result.success_flags.push_back(ok);
    result.success = result.success && ok;
  }
  return result;
}

}  // namespace dvqa
