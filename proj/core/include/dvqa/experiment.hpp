#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dvqa/attack.hpp"
#include "dvqa/metrics.hpp"
#include "dvqa/model.hpp"
#include "dvqa/report.hpp"

namespace dvqa {

// Everything a run needs, loadable from a key=value file with CLI overrides.
struct ExperimentConfig {
  // dataset
  int train_docs = 64;
  int eval_docs = 16;
  std::uint64_t dataset_seed = 7;
  int canvas_width = 256;
  int canvas_height = 384;

  // victim
  std::string style = "headered";  // headered | prompted
  std::string encoder = "mixer";   // mixer | attention
  int patch = 8;
  int embed_dim = 48;
  int hidden_dim = 0;
  int encoder_layers = 2;
  int decoder_layers = 2;
  bool positional_keys = true;
  int max_answer_len = 24;
  int target_width = 128;
  int target_height = 208;
  int header_height = 16;

  // training
  int epochs = 2000;
  double learning_rate = 1e-3;
  int batch_size = 8;
  std::string optimizer = "adam";  // adam | sgd
  double stop_loss = 0.02;
  std::uint64_t train_seed = 1;

  // attack
  std::string scenario = "targeted_single";  // targeted_single | targeted_multi | denial_of_answer
  std::string loss = "auto";                 // auto | nll | logit_margin
  double epsilon = -1.0;                     // <0 picks the per-style default
  double alpha = -1.0;
  int steps = -1;
  double patch_fraction = 0.0;  // 0 runs the full-document setting, 0.15 the patch setting
  int b = 1;
  std::vector<int> b_sweep = {1, 2, 3, 4, 5};
  std::uint64_t attack_seed = 13;
  int doc_id = 0;

  // io
  std::string out_dir = "out";
  std::string params_path;
  int workers = 0;

  void validate() const;
  std::string echo() const;  // key=value form, one per line
};

ExperimentConfig load_config(const std::string& path);
void write_config_echo(const ExperimentConfig& cfg, const std::string& dir);

ModelConfig make_model_config(const ExperimentConfig& cfg);
AttackScenario make_scenario(const ExperimentConfig& cfg, const RasterDocument& doc, int b);
FeasibleSet make_feasible_set(const ExperimentConfig& cfg, const RasterDocument& doc);

// Documents 0..train_docs-1 train the victim; the tail is held out for
// evaluation and attacks.
std::vector<RasterDocument> experiment_dataset(const ExperimentConfig& cfg);
std::vector<RasterDocument> train_split(const std::vector<RasterDocument>& all,
                                        const ExperimentConfig& cfg);
std::vector<RasterDocument> eval_split(const std::vector<RasterDocument>& all,
                                       const ExperimentConfig& cfg);

struct TrainArtifacts {
  std::string params_path;
  TrainLog log;
  double heldout_exact_match = 0.0;
};

int cmd_gen(const ExperimentConfig& cfg);
TrainArtifacts cmd_train(const ExperimentConfig& cfg);
double cmd_eval(const ExperimentConfig& cfg);  // returns the ANLS-baseline

struct AttackArtifacts {
  AttackResult result;
  bool reload_success = false;
  bool verdict_divergence = false;
  std::string png_path;
  std::string json_path;
};
AttackArtifacts cmd_attack(const ExperimentConfig& cfg);

// Attacks every held-out document at each B, aggregates the metric columns,
// and writes report.{csv,json,txt,svg}.
EvalReport cmd_sweep(const ExperimentConfig& cfg);
int cmd_render_report(const std::string& report_json_path, const std::string& out_dir);

// Shared by cmd_sweep and the acceptance suite: run one (B, doc) attack and
// produce the document's full outcome set from the adversarial image.
struct DocAttackOutcome {
  AttackResult result;
  std::vector<QAOutcome> outcomes;  // all M pairs, optimized flags set
};
DocAttackOutcome attack_document(const ModelParams& params, const RasterDocument& doc,
                                 const AttackScenario& scenario, const FeasibleSet& fs,
                                 std::uint64_t seed);

}  // namespace dvqa
