#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dvqa {

struct QAOutcome {
  int doc_id = 0;
  int pair_index = 0;
  std::string prediction;
  std::string ground_truth;
  std::optional<std::string> target;  // present iff optimized in a targeted scenario
  bool optimized = false;
};

// Unit-cost edit distance (insert/delete/substitute).
int levenshtein(const std::string& a, const std::string& b);

// 1 - distance / max(|a|,|b|), in [0,1]. Two empty strings score 1. Inputs are
// whitespace-trimmed and case-folded first unless normalize is false.
double nls(const std::string& prediction, const std::string& truth, bool normalize = true);

enum class AnlsReference { GroundTruth, Targets };
enum class AnlsSubset { All, Optimized, HeldOut };

// Mean thresholded similarity over the selected pairs; empty subsets are
// undefined rather than zero.
std::optional<double> anls(std::span<const QAOutcome> outcomes, AnlsReference reference,
                           AnlsSubset subset, double tau, bool normalize = true);

enum class AsrMode { Targeted, Untargeted };

// Fraction of documents whose optimized pairs all succeed: exact match to the
// target (targeted) or any exact mismatch with the ground truth (untargeted).
double asr(std::span<const QAOutcome> outcomes, AsrMode mode);

// Error rate over pairs excluded from the optimization; undefined when every
// pair was optimized.
std::optional<double> cdmg(std::span<const QAOutcome> outcomes);

}  // namespace dvqa
