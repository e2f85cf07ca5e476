// End-to-end acceptance suite. Each criterion prints one pass/fail line and
// the binary exits with the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "dvqa/attack.hpp"
#include "dvqa/experiment.hpp"
#include "dvqa/metrics.hpp"
#include "dvqa/model_graph.hpp"
#include "dvqa/parallel.hpp"
#include "dvqa/rng.hpp"

using namespace dvqa;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. end-to-end gradient fidelity

Outcome criterion_gradients() {
  struct Config {
    PreprocessStyle style;
    LossKind loss;
    EncoderKind enc;
    int enc_layers;
    std::uint64_t seed;
  };
  const std::vector<Config> configs = {
      {PreprocessStyle::Headered, LossKind::Nll, EncoderKind::Mixer, 1, 101},
      {PreprocessStyle::Headered, LossKind::LogitMargin, EncoderKind::Attention, 1, 102},
      {PreprocessStyle::Padded, LossKind::Nll, EncoderKind::Mixer, 2, 103},
      {PreprocessStyle::Padded, LossKind::LogitMargin, EncoderKind::Mixer, 1, 104},
      {PreprocessStyle::Headered, LossKind::Nll, EncoderKind::Mixer, 2, 105},
      {PreprocessStyle::Padded, LossKind::Nll, EncoderKind::Attention, 1, 106},
  };
  const std::vector<std::string> targets = {"42", "No", "$1.50", "ok", "A1", "x9"};

  double worst = 0.0;
  int idx = 0;
  for (const Config& c : configs) {
    ModelConfig mc;
    mc.embed_dim = 12;
    mc.encoder_layers = c.enc_layers;
    mc.decoder_layers = 1;
    mc.max_answer_len = 10;
    mc.encoder_kind = c.enc;
    if (c.style == PreprocessStyle::Headered) {
      mc.question_mode = QuestionMode::Headered;
      mc.preprocess = PreprocessSpec::headered(64, 72, 8);
    } else {
      mc.question_mode = QuestionMode::Prompted;
      mc.preprocess = PreprocessSpec::padded(64, 72);
    }
    const ModelParams params = init_params(mc, c.seed);

    Rng rng(c.seed);
    Tensord clean({48, 40, 3});
    for (auto& v : clean.data) v = static_cast<double>(rng.uniform_int(256));

    ad::Tape<double> tape;
    ad::Bindings<double> bind;
    ParamBinder<double> p(tape, bind, params);
    ad::NodeId delta = tape.input({48, 40, 3}, "delta");
    ad::NodeId adv = apply_perturbation(tape, clean, delta);

    ad::NodeId pre;
    std::vector<int> prompt;
    const std::vector<int>* prompt_ptr = nullptr;
    if (c.style == PreprocessStyle::Headered) {
      pre = build_headered(tape, adv, "total?", mc.preprocess).output;
    } else {
      pre = build_padded(tape, adv, mc.preprocess).output;
      prompt = question_tokens("total?");
      prompt_ptr = &prompt;
    }
    const std::vector<int> target =
        Vocabulary::standard().tokenize_target(targets[static_cast<std::size_t>(idx)]);
    ad::NodeId loss = build_qa_loss(tape, p, pre, prompt_ptr, target, c.loss, mc);

    Tensord d0({48, 40, 3});
    for (auto& v : d0.data) v = rng.uniform(-3.0, 3.0);
    bind.emplace(delta, d0);

    ad::GradCheckOptions opts;
    opts.step = 1e-5;
    opts.max_components = 24;
    opts.seed = c.seed * 7 + 1;
    const double err = ad::check_gradient(tape, bind, loss, std::vector<ad::NodeId>{delta}, opts);
    worst = std::max(worst, err);
    ++idx;
  }
  return {worst <= 1e-4,
          std::to_string(configs.size()) + " configs, max rel err " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------------------
// 2. feasibility invariants under randomized iterations

Outcome criterion_feasibility() {
  Rng rng(2222);
  long iterations = 0, violations = 0;
  for (double eps : {8.0, 32.0, 96.0}) {
    for (int variant = 0; variant < 2; ++variant) {
      FeasibleSet fs;
      fs.epsilon = eps;
      if (variant == 1) fs.mask = PatchRect{5, 4, 4, 5};
      Tensorf x({12, 10, 3});
      for (auto& v : x.data) v = static_cast<float>(rng.uniform_int(256));
      Tensorf delta(x.shape);
      const double alpha = variant == 0 ? 2.0 : 24.0;
      for (int k = 0; k < 1800; ++k) {
        for (auto& v : delta.data) {
          const double g = rng.uniform(-1.0, 1.0);
          v -= static_cast<float>(alpha * (g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0)));
        }
        delta = quantize_step(x, project(delta, x, fs));
        ++iterations;
        if (!check_feasibility(delta, x, fs).all()) ++violations;
      }
    }
  }
  return {iterations >= 10000 && violations == 0,
          std::to_string(iterations) + " iterations, " + std::to_string(violations) +
              " violations"};
}

// ---------------------------------------------------------------------------
// 3. edit-distance oracle

int lev_oracle(const std::string& a, const std::string& b, std::size_t i = 0, std::size_t j = 0) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  if (a[i] == b[j]) return lev_oracle(a, b, i + 1, j + 1);
  return 1 + std::min({lev_oracle(a, b, i + 1, j), lev_oracle(a, b, i, j + 1),
                       lev_oracle(a, b, i + 1, j + 1)});
}

Outcome criterion_levenshtein() {
  std::vector<std::string> strings{""};
  for (int len = 1; len <= 8; ++len)
    for (int bits = 0; bits < (1 << len); ++bits) {
      std::string s(static_cast<std::size_t>(len), 'a');
      for (int k = 0; k < len; ++k)
        if (bits >> k & 1) s[static_cast<std::size_t>(k)] = 'b';
      strings.push_back(std::move(s));
    }

  long checked = 0, mismatches = 0;
  std::vector<long> partial(strings.size());
  parallel_for(static_cast<int>(strings.size()), 0, [&](int i) {
    const std::string& a = strings[static_cast<std::size_t>(i)];
    long bad = 0;
    for (const std::string& b : strings)
      if (levenshtein(a, b) != lev_oracle(a, b)) ++bad;
    partial[static_cast<std::size_t>(i)] = bad;
  });
  for (long bad : partial) mismatches += bad;
  checked += static_cast<long>(strings.size()) * static_cast<long>(strings.size());

  Rng rng(33);
  const std::string alphabet = "abcXYZ019 $./'-";
  for (int it = 0; it < 1000; ++it) {
    std::string a, b;
    for (std::uint64_t k = rng.uniform_int(9); k > 0; --k)
      a.push_back(alphabet[rng.uniform_int(alphabet.size())]);
    for (std::uint64_t k = rng.uniform_int(9); k > 0; --k)
      b.push_back(alphabet[rng.uniform_int(alphabet.size())]);
    ++checked;
    if (levenshtein(a, b) != lev_oracle(a, b)) ++mismatches;
  }
  return {mismatches == 0,
          std::to_string(checked) + " pairs, " + std::to_string(mismatches) + " mismatches"};
}

// ---------------------------------------------------------------------------
// 4. metric algebra

Outcome criterion_metric_algebra() {
  Rng rng(44);
  bool ok = true;
  std::string why;

  for (int trial = 0; trial < 200 && ok; ++trial) {
    std::vector<QAOutcome> set;
    const int docs = 3 + static_cast<int>(rng.uniform_int(4));
    for (int d = 0; d < docs; ++d)
      for (int j = 0; j < 5; ++j) {
        QAOutcome o;
        o.doc_id = d;
        o.pair_index = j;
        o.ground_truth = "answer" + std::to_string(rng.uniform_int(4));
        o.prediction = rng.uniform() < 0.5 ? o.ground_truth
                                           : "guess" + std::to_string(rng.uniform_int(4));
        o.optimized = false;
        set.push_back(o);
      }
    double prev = 2.0;
    for (double tau : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
      const double v = anls(set, AnlsReference::GroundTruth, AnlsSubset::All, tau).value();
      if (v > prev) {
        ok = false;
        why = "anls increased in tau";
      }
      prev = v;
    }
  }

  for (int trial = 0; trial < 200 && ok; ++trial) {
    std::vector<std::vector<bool>> hit(6, std::vector<bool>(5));
    for (auto& doc : hit)
      for (auto&& h : doc) h = rng.uniform() < 0.75;
    double prev = 2.0;
    for (int b = 1; b <= 5; ++b) {
      std::vector<QAOutcome> set;
      for (int d = 0; d < 6; ++d)
        for (int j = 0; j < b; ++j) {
          QAOutcome o;
          o.doc_id = d;
          o.pair_index = j;
          o.ground_truth = "gt";
          o.prediction = hit[static_cast<std::size_t>(d)][static_cast<std::size_t>(j)] ? "t"
                                                                                       : "miss";
          o.target = "t";
          o.optimized = true;
          set.push_back(o);
        }
      const double v = asr(set, AsrMode::Targeted);
      if (v > prev + 1e-15) {
        ok = false;
        why = "asr increased in nested B";
      }
      prev = v;
      if (b == 5 && cdmg(set).has_value()) {
        ok = false;
        why = "cdmg defined at B = M";
      }
    }
  }
  if (ok) why = "anls tau-monotone, asr conjunction-monotone, cdmg undefined at B=M";
  return {ok, why};
}

// ---------------------------------------------------------------------------
// 5-8 share the trained toy victim

struct VictimBundle {
  ExperimentConfig cfg;
  std::vector<RasterDocument> train_docs;
  std::vector<RasterDocument> eval_docs;
  ModelParams params;
  TrainLog log;
  double heldout_em = 0.0;
  double train_seconds = 0.0;
};

VictimBundle train_victim() {
  VictimBundle b;
  b.cfg = ExperimentConfig{};  // the stock toy victim
  const auto all = experiment_dataset(b.cfg);
  b.train_docs = train_split(all, b.cfg);
  b.eval_docs = eval_split(all, b.cfg);

  TrainOptions opts;
  opts.epochs = b.cfg.epochs;
  opts.learning_rate = b.cfg.learning_rate;
  opts.batch_size = b.cfg.batch_size;
  opts.optimizer = b.cfg.optimizer == "adam" ? TrainOptions::Optimizer::Adam
                                             : TrainOptions::Optimizer::Sgd;
  opts.stop_loss = b.cfg.stop_loss;
  opts.weight_decay = 1e-4;
  opts.workers = 0;

  const auto t0 = std::chrono::steady_clock::now();
  b.params = train_model(make_model_config(b.cfg), b.train_docs, opts, b.cfg.train_seed, &b.log);
  b.train_seconds = seconds_since(t0);
  b.heldout_em = exact_match_rate(b.params, b.eval_docs);
  return b;
}

Outcome criterion_victim(const VictimBundle& v) {
  const bool pass = v.heldout_em >= 0.95 && v.log.epochs_run <= 2000 && v.train_seconds < 1800.0;
  return {pass, "held-out EM " + fmt("%.3f", v.heldout_em) + " after " +
                    std::to_string(v.log.epochs_run) + " epochs in " +
                    fmt("%.0f", v.train_seconds) + "s"};
}

struct SweepData {
  std::vector<double> asr_by_b;           // targeted full-document, B = 1..5
  std::optional<double> cdmg_b1;          // collateral at B = 1
  double patch_asr_b1 = 0.0;              // targeted patch at matched K
  double doa_flip_rate = 0.0;             // K = 1, B = 5
  int reload_agreements = 0;              // criterion 8 tally
  int reload_total = 0;
};

SweepData run_attack_battery(const VictimBundle& v) {
  SweepData out;
  const std::filesystem::path tmp =
      std::filesystem::temp_directory_path() / "dvqa_acceptance_png";
  std::filesystem::create_directories(tmp);

  // clean predictions, for the denial-of-answer flip definition
  std::vector<std::vector<std::string>> clean(v.eval_docs.size());
  for (std::size_t d = 0; d < v.eval_docs.size(); ++d)
    for (const QAPair& qa : v.eval_docs[d].qa)
      clean[d].push_back(answer(v.params, v.eval_docs[d].image, qa.question));

  auto reload_check = [&](const AttackResult& result, const RasterDocument& doc,
                          const AttackScenario& scenario) {
    const std::string path = (tmp / ("a" + std::to_string(out.reload_total) + ".png")).string();
    write_png(path, result.adversarial_image());
    const ImageU8 reloaded = read_png(path);
    bool ok = true;
    for (std::size_t pos = 0; pos < scenario.qa_indices.size(); ++pos) {
      const QAPair& qa = doc.qa[static_cast<std::size_t>(scenario.qa_indices[pos])];
      const std::string pred = answer(v.params, reloaded, qa.question);
      const bool hit = scenario.kind == ScenarioKind::DenialOfAnswer
                           ? pred != qa.answer
                           : pred == scenario.targets[pos];
      ok = ok && hit;
    }
    ++out.reload_total;
    if (ok == result.success) ++out.reload_agreements;
  };

  // targeted full-document sweep over B
  for (int b = 1; b <= 5; ++b) {
    std::vector<DocAttackOutcome> results(v.eval_docs.size());
    std::vector<AttackScenario> scenarios(v.eval_docs.size());
    parallel_for(static_cast<int>(v.eval_docs.size()), 0, [&](int i) {
      const RasterDocument& doc = v.eval_docs[static_cast<std::size_t>(i)];
      AttackScenario s = build_scenario(
          b == 1 ? ScenarioKind::TargetedSingle : ScenarioKind::TargetedMulti, doc, b,
          default_target_pool());
      const AttackDefaults d = attack_defaults(QuestionMode::Headered, false);
      s.loss = d.loss;
      s.alpha = d.alpha;
      s.steps = d.steps;
      FeasibleSet fs;
      fs.epsilon = d.epsilon;
      scenarios[static_cast<std::size_t>(i)] = s;
      results[static_cast<std::size_t>(i)] = attack_document(v.params, doc, s, fs, 77 + doc.id);
    });

    std::vector<QAOutcome> outcomes;
    for (const auto& r : results)
      outcomes.insert(outcomes.end(), r.outcomes.begin(), r.outcomes.end());
    out.asr_by_b.push_back(asr(outcomes, AsrMode::Targeted));
    if (b == 1) out.cdmg_b1 = cdmg(outcomes);
    for (std::size_t i = 0; i < results.size(); ++i)
      reload_check(results[i].result, v.eval_docs[i], scenarios[i]);
  }

  // targeted patch at matched K
  {
    std::vector<DocAttackOutcome> results(v.eval_docs.size());
    std::vector<AttackScenario> scenarios(v.eval_docs.size());
    parallel_for(static_cast<int>(v.eval_docs.size()), 0, [&](int i) {
      const RasterDocument& doc = v.eval_docs[static_cast<std::size_t>(i)];
      AttackScenario s = build_scenario(ScenarioKind::TargetedSingle, doc, 1,
                                        default_target_pool());
      s.alpha = 24.0;
      s.steps = attack_defaults(QuestionMode::Headered, false).steps;  // matched K
      FeasibleSet fs;
      fs.epsilon = 96.0;
      fs.mask = patch_region(doc, 0.15);
      scenarios[static_cast<std::size_t>(i)] = s;
      results[static_cast<std::size_t>(i)] = attack_document(v.params, doc, s, fs, 177 + doc.id);
    });
    std::vector<QAOutcome> outcomes;
    for (const auto& r : results)
      outcomes.insert(outcomes.end(), r.outcomes.begin(), r.outcomes.end());
    out.patch_asr_b1 = asr(outcomes, AsrMode::Targeted);
    for (std::size_t i = 0; i < results.size(); ++i)
      reload_check(results[i].result, v.eval_docs[i], scenarios[i]);
  }

  // denial of answer, single step, all pairs
  {
    std::vector<DocAttackOutcome> results(v.eval_docs.size());
    std::vector<AttackScenario> scenarios(v.eval_docs.size());
    parallel_for(static_cast<int>(v.eval_docs.size()), 0, [&](int i) {
      const RasterDocument& doc = v.eval_docs[static_cast<std::size_t>(i)];
      AttackScenario s = build_scenario(ScenarioKind::DenialOfAnswer, doc, 5,
                                        default_target_pool());
      s.alpha = 2.0;
      s.steps = 1;
      FeasibleSet fs;
      fs.epsilon = attack_defaults(QuestionMode::Headered, false).epsilon;
      scenarios[static_cast<std::size_t>(i)] = s;
      results[static_cast<std::size_t>(i)] = attack_document(v.params, doc, s, fs, 277 + doc.id);
    });
    int flipped_docs = 0;
    for (std::size_t d = 0; d < results.size(); ++d) {
      bool flipped = false;
      for (const QAOutcome& o : results[d].outcomes) {
        const std::string& was = clean[d][static_cast<std::size_t>(o.pair_index)];
        if (was == o.ground_truth && o.prediction != o.ground_truth) flipped = true;
      }
      if (flipped) ++flipped_docs;
      reload_check(results[d].result, v.eval_docs[d], scenarios[d]);
    }
    out.doa_flip_rate = static_cast<double>(flipped_docs) / static_cast<double>(results.size());
  }

  std::filesystem::remove_all(tmp);
  return out;
}

Outcome criterion_attack_efficacy(const SweepData& s) {
  int trend_violations = 0;
  for (std::size_t i = 1; i < s.asr_by_b.size(); ++i)
    if (s.asr_by_b[i] > s.asr_by_b[i - 1] + 1e-12) ++trend_violations;
  const bool pass = s.asr_by_b.front() >= 0.80 && trend_violations <= 1 &&
                    s.patch_asr_b1 <= s.asr_by_b.front() + 1e-12;
  std::string detail = "ASR(B=1..5) =";
  for (double v : s.asr_by_b) detail += " " + fmt("%.2f", v);
  detail += ", patch " + fmt("%.2f", s.patch_asr_b1) + ", trend violations " +
            std::to_string(trend_violations);
  return {pass, detail};
}

Outcome criterion_doa(const SweepData& s) {
  const double collateral = s.cdmg_b1.value_or(1.0);
  const bool pass = s.doa_flip_rate >= 0.50 && collateral <= 0.25;
  return {pass, "K=1 flip rate " + fmt("%.2f", s.doa_flip_rate) + ", single-QA CDMG " +
                    fmt("%.3f", collateral)};
}

Outcome criterion_serialization(const SweepData& s) {
  const bool pass = s.reload_total >= 100 && s.reload_agreements == s.reload_total;
  return {pass, std::to_string(s.reload_agreements) + "/" + std::to_string(s.reload_total) +
                    " verdicts identical after PNG reload"};
}

// ---------------------------------------------------------------------------
// 9. logit-margin characterization

Outcome criterion_margin(const VictimBundle& v) {
  const Vocabulary& vocab = Vocabulary::standard();
  int checked = 0, failures = 0;

  // crafted logit rows, exact ties included
  {
    struct Case {
      std::vector<double> rows;  // 2 x 4
      std::vector<int> targets;
      double want;
    };
    const std::vector<Case> cases = {
        {{5, 3, 1, 0, 0, 7, 1, 0}, {1, 1}, 2.0},          // one wrong position
        {{0, 9, 1, 0, 0, 4, 1, 0}, {1, 1}, 0.0},          // all positions win
        {{2, 2, 0, 0, 0, 5, 0, 0}, {1, 1}, 0.0},          // exact tie, margin zero
        {{2, 2, 0, 0, 0, 5, 0, 0}, {0, 1}, 0.0},          // tie, target at the low index
        {{1, 1 + 1e-9, 0, 0, 0, 3, 0, 0}, {0, 1}, 1e-9},  // near-tie just misses
        {{-3, -1, -2, -9, -1, -1, -5, -2}, {2, 0}, 1.0},  // negative logits
    };
    for (const Case& c : cases) {
      ad::Tape<double> tape;
      Tensord z({2, 4});
      z.data = c.rows;
      ad::NodeId loss = margin_from_logits(tape, tape.constant(z), c.targets);
      const double got = ad::forward(tape, {}).value(loss).data[0];
      ++checked;
      if (std::abs(got - c.want) > 1e-12) ++failures;
    }
  }

  // random models: per-row independent evaluation must match, and the zero
  // case must coincide with every teacher-forced argmax hitting its target
  ModelConfig mc;
  mc.embed_dim = 12;
  mc.encoder_layers = 1;
  mc.decoder_layers = 1;
  mc.max_answer_len = 18;
  mc.question_mode = QuestionMode::Headered;
  mc.preprocess = PreprocessSpec::headered(64, 72, 8);

  Rng rng(99);
  const std::vector<std::string> pool = {"No Answer", "Unclear", "Retry", "Try later",
                                         "I won't tell you", "8176", "$0.00"};
  for (int m = 0; m < 14; ++m) {
    const ModelParams params = init_params(mc, 500 + static_cast<std::uint64_t>(m));
    Tensord clean({48, 40, 3});
    for (auto& v2 : clean.data) v2 = static_cast<double>(rng.uniform_int(256));
    const Tensorf cleanf = tensor_cast<float>(clean);

    for (int t = 0; t < 7; ++t) {
      const std::string& target = pool[static_cast<std::size_t>(t)];
      const std::vector<int> tgt = vocab.tokenize_target(target);
      std::vector<int> input(tgt.size());
      input[0] = Vocabulary::kBos;
      for (std::size_t i = 1; i < input.size(); ++i) input[i] = tgt[i - 1];

      ad::Tape<float> tape;
      ad::Bindings<float> bind;
      ParamBinder<float> p(tape, bind, params);
      ad::NodeId raw = tape.constant(cleanf, "clean");
      auto pre = build_headered(tape, raw, "total?", mc.preprocess);
      ad::NodeId H = build_encoder(tape, p, pre.output, nullptr, mc);
      ad::NodeId Z = build_decoder_logits(tape, p, H, input, mc);
      ad::NodeId L = margin_from_logits(tape, Z, tgt);
      const auto fwd = ad::forward(tape, bind);
      const double loss = fwd.value(L).data[0];
      const Tensorf logits = fwd.value(Z);

      double want = 0.0;
      bool all_match = true;
      for (std::size_t r = 0; r < tgt.size(); ++r) {
        int arg = 0;
        for (int c = 1; c < vocab.size(); ++c)
          if (logits.at2(static_cast<int>(r), c) > logits.at2(static_cast<int>(r), arg)) arg = c;
        if (arg != tgt[r]) {
          all_match = false;
          want += static_cast<double>(logits.at2(static_cast<int>(r), arg)) -
                  logits.at2(static_cast<int>(r), tgt[r]);
        }
      }
      ++checked;
      const bool value_ok = std::abs(loss - want) <= 1e-4 * std::max(1.0, std::abs(want));
      const bool zero_ok = (loss == 0.0) == all_match;
      if (!value_ok || !zero_ok) ++failures;
    }
  }

  // the trained victim forced onto its own emissions: zero margin by
  // construction when the decode ends naturally
  {
    int used = 0;
    for (const RasterDocument& doc : v.eval_docs) {
      if (used >= 2) break;
      const std::string emitted = answer(v.params, doc.image, doc.qa[0].question);
      if (emitted.empty() || !vocab.can_tokenize(emitted) ||
          static_cast<int>(emitted.size()) + 1 > v.params.config.max_answer_len)
        continue;
      const Tensorf zero(Shape{doc.image.height, doc.image.width, 3});
      const double loss =
          logit_margin_loss(v.params, doc, doc.qa[0].question, emitted, zero);
      ++checked;
      ++used;
      // the reference and differentiable pipelines may disagree on exact ties;
      // the emitted string is the reference argmax, so demand near-zero
      if (loss > 1e-3) ++failures;
    }
  }

  return {failures == 0 && checked >= 100,
          std::to_string(checked) + " cases, " + std::to_string(failures) + " failures"};
}

}  // namespace

int main() {
  int failures = 0;
  const auto run = [&](int id, const char* name, Outcome outcome, double secs) {
    std::printf("criterion %d (%s): %s  [%s, %.1fs]\n", id, name,
                outcome.pass ? "PASS" : "FAIL", outcome.detail.c_str(), secs);
    std::fflush(stdout);
    if (!outcome.pass) ++failures;
  };

  auto timed = [&](int id, const char* name, auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o = fn();
    run(id, name, o, seconds_since(t0));
    return o;
  };

  timed(1, "gradient fidelity", [] { return criterion_gradients(); });
  timed(2, "feasibility invariants", [] { return criterion_feasibility(); });
  timed(3, "edit-distance oracle", [] { return criterion_levenshtein(); });
  timed(4, "metric algebra", [] { return criterion_metric_algebra(); });

  const auto t_victim = std::chrono::steady_clock::now();
  VictimBundle victim = train_victim();
  run(5, "toy victim quality gate", criterion_victim(victim), seconds_since(t_victim));

  const auto t_battery = std::chrono::steady_clock::now();
  const SweepData battery = run_attack_battery(victim);
  const double battery_secs = seconds_since(t_battery);
  run(6, "attack efficacy", criterion_attack_efficacy(battery), battery_secs);
  run(7, "denial of answer", criterion_doa(battery), 0.0);
  run(8, "serialization fidelity", criterion_serialization(battery), 0.0);

  timed(9, "logit-margin characterization", [&] { return criterion_margin(victim); });

  std::printf("%s: %d/9 criteria passed\n", failures == 0 ? "ACCEPTED" : "REJECTED",
              9 - failures);
  return failures;
}
