#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "dvqa/experiment.hpp"

using dvqa::ExperimentConfig;

namespace {

void add_common(CLI::App* cmd, ExperimentConfig& cfg, std::string& config_path) {
  cmd->add_option("--config", config_path, "key=value config file; flags override its entries");
  cmd->add_option("--out", cfg.out_dir, "output directory")->envname("DVQA_OUT");
  cmd->add_option("--train-docs", cfg.train_docs, "training documents");
  cmd->add_option("--eval-docs", cfg.eval_docs, "held-out documents");
  cmd->add_option("--dataset-seed", cfg.dataset_seed, "dataset seed");
  cmd->add_option("--canvas-width", cfg.canvas_width, "document width in pixels");
  cmd->add_option("--canvas-height", cfg.canvas_height, "document height in pixels");
  cmd->add_option("--style", cfg.style, "victim style: headered | prompted");
  cmd->add_option("--encoder", cfg.encoder, "encoder kind: mixer | attention");
  cmd->add_option("--patch-size", cfg.patch, "encoder patch size");
  cmd->add_option("--embed-dim", cfg.embed_dim, "embedding width");
  cmd->add_option("--hidden-dim", cfg.hidden_dim, "MLP hidden width (0 = 2x embed)");
  cmd->add_option("--encoder-layers", cfg.encoder_layers, "encoder depth");
  cmd->add_option("--decoder-layers", cfg.decoder_layers, "decoder depth");
  cmd->add_option("--max-answer-len", cfg.max_answer_len, "decoding length bound");
  cmd->add_option("--target-width", cfg.target_width, "preprocessed width");
  cmd->add_option("--target-height", cfg.target_height, "preprocessed height");
  cmd->add_option("--header-height", cfg.header_height, "question band height (headered)");
  cmd->add_option("--workers", cfg.workers, "worker threads (0 = hardware)");
  cmd->add_option("--params", cfg.params_path, "model parameters file");
}

void add_attack_options(CLI::App* cmd, ExperimentConfig& cfg) {
  cmd->add_option("--scenario", cfg.scenario,
                  "targeted_single | targeted_multi | denial_of_answer");
  cmd->add_option("--loss", cfg.loss, "auto | nll | logit_margin");
  cmd->add_option("--epsilon", cfg.epsilon, "l-inf budget in 8-bit units (<0 = style default)");
  cmd->add_option("--alpha", cfg.alpha, "step size (<0 = style default)");
  cmd->add_option("--steps", cfg.steps, "PGD iterations (<0 = style default)");
  cmd->add_option("--patch-fraction", cfg.patch_fraction,
                  "patch side as a fraction of min(H,W); 0 = full document");
  cmd->add_option("--attack-seed", cfg.attack_seed, "attack seed");
}

ExperimentConfig merge_config(const std::string& config_path, const ExperimentConfig& overrides,
                              const CLI::App* cmd) {
  if (config_path.empty()) return overrides;
  ExperimentConfig merged = dvqa::load_config(config_path);
  auto seen = [cmd](const std::string& name) {
    const CLI::Option* opt = cmd->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  };
  if (seen("--out")) merged.out_dir = overrides.out_dir;
  if (seen("--train-docs")) merged.train_docs = overrides.train_docs;
  if (seen("--eval-docs")) merged.eval_docs = overrides.eval_docs;
  if (seen("--dataset-seed")) merged.dataset_seed = overrides.dataset_seed;
  if (seen("--canvas-width")) merged.canvas_width = overrides.canvas_width;
  if (seen("--canvas-height")) merged.canvas_height = overrides.canvas_height;
  if (seen("--style")) merged.style = overrides.style;
  if (seen("--encoder")) merged.encoder = overrides.encoder;
  if (seen("--patch-size")) merged.patch = overrides.patch;
  if (seen("--embed-dim")) merged.embed_dim = overrides.embed_dim;
  if (seen("--hidden-dim")) merged.hidden_dim = overrides.hidden_dim;
  if (seen("--encoder-layers")) merged.encoder_layers = overrides.encoder_layers;
  if (seen("--decoder-layers")) merged.decoder_layers = overrides.decoder_layers;
  if (seen("--max-answer-len")) merged.max_answer_len = overrides.max_answer_len;
  if (seen("--target-width")) merged.target_width = overrides.target_width;
  if (seen("--target-height")) merged.target_height = overrides.target_height;
  if (seen("--header-height")) merged.header_height = overrides.header_height;
  if (seen("--workers")) merged.workers = overrides.workers;
  if (seen("--params")) merged.params_path = overrides.params_path;
  if (seen("--epochs")) merged.epochs = overrides.epochs;
  if (seen("--learning-rate")) merged.learning_rate = overrides.learning_rate;
  if (seen("--batch-size")) merged.batch_size = overrides.batch_size;
  if (seen("--optimizer")) merged.optimizer = overrides.optimizer;
  if (seen("--stop-loss")) merged.stop_loss = overrides.stop_loss;
  if (seen("--train-seed")) merged.train_seed = overrides.train_seed;
  if (seen("--scenario")) merged.scenario = overrides.scenario;
  if (seen("--loss")) merged.loss = overrides.loss;
  if (seen("--epsilon")) merged.epsilon = overrides.epsilon;
  if (seen("--alpha")) merged.alpha = overrides.alpha;
  if (seen("--steps")) merged.steps = overrides.steps;
  if (seen("--patch-fraction")) merged.patch_fraction = overrides.patch_fraction;
  if (seen("--attack-seed")) merged.attack_seed = overrides.attack_seed;
  if (seen("--doc")) merged.doc_id = overrides.doc_id;
  if (seen("--b")) merged.b = overrides.b;
  if (seen("--b-sweep")) merged.b_sweep = overrides.b_sweep;
  return merged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial forgery toolkit for a toy OCR-free document VQA victim"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  std::string config_path;

  auto* gen = app.add_subcommand("gen", "render a synthetic invoice dataset with QA pairs");
  add_common(gen, cfg, config_path);

  auto* train = app.add_subcommand("train", "train the victim model and save its parameters");
  add_common(train, cfg, config_path);
  train->add_option("--epochs", cfg.epochs, "epoch cap");
  train->add_option("--learning-rate", cfg.learning_rate, "learning rate");
  train->add_option("--batch-size", cfg.batch_size, "minibatch size");
  train->add_option("--optimizer", cfg.optimizer, "adam | sgd");
  train->add_option("--stop-loss", cfg.stop_loss, "early-stop threshold on mean loss");
  train->add_option("--train-seed", cfg.train_seed, "training seed");

  auto* eval = app.add_subcommand("eval", "clean ANLS-baseline of a trained model");
  add_common(eval, cfg, config_path);

  auto* attack = app.add_subcommand("attack", "attack one held-out document");
  add_common(attack, cfg, config_path);
  add_attack_options(attack, cfg);
  attack->add_option("--doc", cfg.doc_id, "index into the evaluation split");
  attack->add_option("--b", cfg.b, "number of optimized QA pairs");

  auto* sweep = app.add_subcommand("sweep", "attack every held-out document across a B sweep");
  add_common(sweep, cfg, config_path);
  add_attack_options(sweep, cfg);
  sweep->add_option("--b-sweep", cfg.b_sweep, "B values, e.g. --b-sweep 1 2 3 4 5");

  std::string report_path;
  auto* render = app.add_subcommand("render-report", "re-render report.json as csv/txt/svg");
  render->add_option("report", report_path, "path to report.json")->required();
  render->add_option("--out", cfg.out_dir, "output directory")->envname("DVQA_OUT");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const ExperimentConfig c = merge_config(config_path, cfg, gen);
      const int n = dvqa::cmd_gen(c);
      std::printf("wrote %d documents to %s/dataset\n", n, c.out_dir.c_str());
    } else if (train->parsed()) {
      const ExperimentConfig c = merge_config(config_path, cfg, train);
      const dvqa::TrainArtifacts art = dvqa::cmd_train(c);
      std::printf("params: %s\nepochs: %d\nheld-out exact match: %.4f\n",
                  art.params_path.c_str(), art.log.epochs_run, art.heldout_exact_match);
    } else if (eval->parsed()) {
      const double score = dvqa::cmd_eval(merge_config(config_path, cfg, eval));
      std::printf("ANLS-baseline: %.4f\n", score);
    } else if (attack->parsed()) {
      const dvqa::AttackArtifacts art = dvqa::cmd_attack(merge_config(config_path, cfg, attack));
      std::printf("success: %s (after reload: %s)\npng: %s\njson: %s\n",
                  art.result.success ? "yes" : "no", art.reload_success ? "yes" : "no",
                  art.png_path.c_str(), art.json_path.c_str());
      if (art.verdict_divergence) {
        std::fprintf(stderr, "verdict divergence between memory and reload\n");
        return 2;
      }
    } else if (sweep->parsed()) {
      const dvqa::EvalReport report = dvqa::cmd_sweep(merge_config(config_path, cfg, sweep));
      std::printf("%s", dvqa::report_text(report).c_str());
    } else if (render->parsed()) {
      const int rows = dvqa::cmd_render_report(report_path, cfg.out_dir);
      std::printf("rendered %d rows to %s\n", rows, cfg.out_dir.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
