#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dvqa/docgen.hpp"
#include "dvqa/model.hpp"
#include "dvqa/tensor.hpp"

namespace dvqa {

struct PatchRect {
  int row0 = 0, col0 = 0, height = 0, width = 0;
};

// Everything the projection enforces: the l-inf budget in raw 8-bit units,
// pixel box bounds, and an optional patch support.
struct FeasibleSet {
  double epsilon = 8.0;
  double lower = 0.0;
  double upper = 255.0;
  std::optional<PatchRect> mask;

  void validate() const;
};

// Bottom-right square whose side is floor(fraction * min(H, W)).
PatchRect patch_region(const RasterDocument& doc, double fraction);
PatchRect patch_region(int height, int width, double fraction);

// Clamp to [-eps, eps], clamp x + delta to the box, zero outside the mask.
// Idempotent.
Tensorf project(const Tensorf& delta, const Tensorf& x, const FeasibleSet& fs);

// Rounds so x + delta lands on integers, ties away from the clean pixel
// value. x must already be integer-valued.
Tensorf quantize_step(const Tensorf& x, const Tensorf& delta);

struct FeasibilityReport {
  bool linf_ok = true, box_ok = true, integer_ok = true, support_ok = true;
  bool all() const { return linf_ok && box_ok && integer_ok && support_ok; }
};
FeasibilityReport check_feasibility(const Tensorf& delta, const Tensorf& x, const FeasibleSet& fs);

enum class ScenarioKind { TargetedSingle, TargetedMulti, DenialOfAnswer };

struct AttackScenario {
  ScenarioKind kind = ScenarioKind::TargetedSingle;
  int gamma = 1;  // +1 targeted, -1 denial of answer
  LossKind loss = LossKind::Nll;
  std::vector<int> qa_indices;        // which of the document's pairs are optimized
  std::vector<std::string> targets;   // per optimized pair: y* or the ground truth (DoA)
  double alpha = 2.0;
  int steps = 20;

  void validate(const RasterDocument& doc) const;
};

// "No Answer", "Unclear", "Retry", "Try later", "I won't tell you"
const std::vector<std::string>& default_target_pool();

// Targeted kinds take the first b pool entries for the first b QA pairs in
// dataset order; denial-of-answer flips gamma and targets the ground truths.
AttackScenario build_scenario(ScenarioKind kind, const RasterDocument& doc, int b,
                              std::span<const std::string> target_pool);

struct AttackDefaults {
  LossKind loss;
  double epsilon;
  double alpha;
  int steps;
};
// Per victim style and support: Headered full (nll, 8, 2, 20), Headered patch
// (nll, 96, 24, 25), Prompted full (margin, 32, 2, 100), Prompted patch
// (margin, 96, 24, 100).
AttackDefaults attack_defaults(QuestionMode style, bool patch);

// gamma * sum over optimized pairs of the teacher-forced NLL toward the
// scenario targets, evaluated at x + delta.
double nll_objective(const ModelParams& params, const RasterDocument& doc,
                     const AttackScenario& scenario, const Tensorf& delta);

// Teacher-forced logit-margin loss for a single pair at x + delta.
double logit_margin_loss(const ModelParams& params, const RasterDocument& doc,
                         const std::string& question, const std::string& target,
                         const Tensorf& delta);

struct AttackOptions {
  bool enforce_invariants = true;  // verify the feasible set after every iteration
  int workers = 1;
};

struct AttackResult {
  Tensorf delta;  // integer-valued, raw extents
  Tensorf clean;  // the raw document pixels the delta applies to
  std::vector<double> loss_trajectory;  // objective at each iterate, final appended
  std::vector<std::string> final_answers;  // per optimized pair, free-running decode
  std::vector<bool> success_flags;
  bool success = false;  // conjunction over optimized pairs

  ImageU8 adversarial_image() const;
};

// K iterations of sign-gradient step -> project -> quantize from delta = 0.
// Success is judged by free-running greedy decode of the saved 8-bit result
// through the reference pipeline. Aborts with the iteration index if the
// gradient turns non-finite.
AttackResult pgd_attack(const ModelParams& params, const RasterDocument& doc,
                        const AttackScenario& scenario, const FeasibleSet& fs, std::uint64_t seed,
                        const AttackOptions& options = {});

}  // namespace dvqa
