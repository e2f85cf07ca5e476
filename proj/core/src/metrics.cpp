#include "dvqa/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <stdexcept>

namespace dvqa {

int levenshtein(const std::string& a, const std::string& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

namespace {

std::string fold(const std::string& s) {
  std::size_t lo = 0, hi = s.size();
  while (lo < hi && std::isspace(static_cast<unsigned char>(s[lo]))) ++lo;
  while (hi > lo && std::isspace(static_cast<unsigned char>(s[hi - 1]))) --hi;
  std::string out = s.substr(lo, hi - lo);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

double thresholded(double score, double tau) { return score >= tau ? score : 0.0; }

}  // namespace

double nls(const std::string& prediction, const std::string& truth, bool normalize) {
  const std::string p = normalize ? fold(prediction) : prediction;
  const std::string t = normalize ? fold(truth) : truth;
  const std::size_t denom = std::max(p.size(), t.size());
  if (denom == 0) return 1.0;  // identical empty answers are maximally similar
  return 1.0 - static_cast<double>(levenshtein(p, t)) / static_cast<double>(denom);
}

std::optional<double> anls(std::span<const QAOutcome> outcomes, AnlsReference reference,
                           AnlsSubset subset, double tau, bool normalize) {
  double sum = 0.0;
  int count = 0;
  for (const QAOutcome& o : outcomes) {
    if (subset == AnlsSubset::Optimized && !o.optimized) continue;
    if (subset == AnlsSubset::HeldOut && o.optimized) continue;
    const std::string* ref = &o.ground_truth;
    if (reference == AnlsReference::Targets) {
      if (!o.target) throw std::invalid_argument("anls: outcome lacks a target string");
      ref = &*o.target;
    }
    sum += thresholded(nls(o.prediction, *ref, normalize), tau);
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

double asr(std::span<const QAOutcome> outcomes, AsrMode mode) {
  std::map<int, bool> success;  // doc -> conjunction over optimized pairs
  for (const QAOutcome& o : outcomes) {
    if (!o.optimized) continue;
    bool ok;
    if (mode == AsrMode::Targeted) {
      if (!o.target) throw std::invalid_argument("asr: targeted outcome lacks a target string");
      ok = o.prediction == *o.target;
    } else {
      ok = o.prediction != o.ground_truth;
    }
    auto [it, fresh] = success.emplace(o.doc_id, ok);
    if (!fresh) it->second = it->second && ok;
  }
  if (success.empty()) return 0.0;
  int wins = 0;
  for (const auto& [doc, ok] : success) wins += ok ? 1 : 0;
  return static_cast<double>(wins) / static_cast<double>(success.size());
}

std::optional<double> cdmg(std::span<const QAOutcome> outcomes) {
  int wrong = 0, count = 0;
  for (const QAOutcome& o : outcomes) {
    if (o.optimized) continue;
    ++count;
    if (o.prediction != o.ground_truth) ++wrong;
  }
  if (count == 0) return std::nullopt;  // B = M leaves nothing held out
  return static_cast<double>(wrong) / static_cast<double>(count);
}

}  // namespace dvqa
