#include "dvqa/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dvqa/parallel.hpp"

namespace dvqa {

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (train_docs < 1 || eval_docs < 1)
    throw std::invalid_argument("config: need at least one train and one eval document");
  if (style != "headered" && style != "prompted")
    throw std::invalid_argument("config: style must be headered or prompted");
  if (encoder != "mixer" && encoder != "attention")
    throw std::invalid_argument("config: encoder must be mixer or attention");
  if (optimizer != "adam" && optimizer != "sgd")
    throw std::invalid_argument("config: optimizer must be adam or sgd");
  if (scenario != "targeted_single" && scenario != "targeted_multi" &&
      scenario != "denial_of_answer")
    throw std::invalid_argument("config: unknown scenario " + scenario);
  if (loss != "auto" && loss != "nll" && loss != "logit_margin")
    throw std::invalid_argument("config: unknown loss " + loss);
  if (patch_fraction < 0.0 || patch_fraction >= 1.0)
    throw std::invalid_argument("config: patch_fraction must lie in [0, 1)");
  for (int b : b_sweep)
    if (b < 1 || b > kQaPairsPerDocument)
      throw std::invalid_argument("config: b_sweep values must lie in [1, 5]");
}

std::string ExperimentConfig::echo() const {
  std::ostringstream os;
  os << "train_docs=" << train_docs << "\n"
     << "eval_docs=" << eval_docs << "\n"
     << "dataset_seed=" << dataset_seed << "\n"
     << "canvas_width=" << canvas_width << "\n"
     << "canvas_height=" << canvas_height << "\n"
     << "style=" << style << "\n"
     << "encoder=" << encoder << "\n"
     << "patch=" << patch << "\n"
     << "embed_dim=" << embed_dim << "\n"
     << "hidden_dim=" << hidden_dim << "\n"
     << "encoder_layers=" << encoder_layers << "\n"
     << "decoder_layers=" << decoder_layers << "\n"
     << "positional_keys=" << (positional_keys ? 1 : 0) << "\n"
     << "max_answer_len=" << max_answer_len << "\n"
     << "target_width=" << target_width << "\n"
     << "target_height=" << target_height << "\n"
     << "header_height=" << header_height << "\n"
     << "epochs=" << epochs << "\n"
     << "learning_rate=" << learning_rate << "\n"
     << "batch_size=" << batch_size << "\n"
     << "optimizer=" << optimizer << "\n"
     << "stop_loss=" << stop_loss << "\n"
     << "train_seed=" << train_seed << "\n"
     << "scenario=" << scenario << "\n"
     << "loss=" << loss << "\n"
     << "epsilon=" << epsilon << "\n"
     << "alpha=" << alpha << "\n"
     << "steps=" << steps << "\n"
     << "patch_fraction=" << patch_fraction << "\n"
     << "b=" << b << "\n"
     << "b_sweep=" << join_ints(b_sweep) << "\n"
     << "attack_seed=" << attack_seed << "\n"
     << "doc_id=" << doc_id << "\n"
     << "out_dir=" << out_dir << "\n"
     << "params_path=" << params_path << "\n"
     << "workers=" << workers << "\n";
  return os.str();
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) continue;
    try {
      if (key == "train_docs") cfg.train_docs = std::stoi(value);
      else if (key == "eval_docs") cfg.eval_docs = std::stoi(value);
      else if (key == "dataset_seed") cfg.dataset_seed = std::stoull(value);
      else if (key == "canvas_width") cfg.canvas_width = std::stoi(value);
      else if (key == "canvas_height") cfg.canvas_height = std::stoi(value);
      else if (key == "style") cfg.style = value;
      else if (key == "encoder") cfg.encoder = value;
      else if (key == "patch") cfg.patch = std::stoi(value);
      else if (key == "embed_dim") cfg.embed_dim = std::stoi(value);
      else if (key == "hidden_dim") cfg.hidden_dim = std::stoi(value);
      else if (key == "encoder_layers") cfg.encoder_layers = std::stoi(value);
      else if (key == "decoder_layers") cfg.decoder_layers = std::stoi(value);
      else if (key == "positional_keys") cfg.positional_keys = std::stoi(value) != 0;
      else if (key == "max_answer_len") cfg.max_answer_len = std::stoi(value);
      else if (key == "target_width") cfg.target_width = std::stoi(value);
      else if (key == "target_height") cfg.target_height = std::stoi(value);
      else if (key == "header_height") cfg.header_height = std::stoi(value);
      else if (key == "epochs") cfg.epochs = std::stoi(value);
      else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
      else if (key == "batch_size") cfg.batch_size = std::stoi(value);
      else if (key == "optimizer") cfg.optimizer = value;
      else if (key == "stop_loss") cfg.stop_loss = std::stod(value);
      else if (key == "train_seed") cfg.train_seed = std::stoull(value);
      else if (key == "scenario") cfg.scenario = value;
      else if (key == "loss") cfg.loss = value;
      else if (key == "epsilon") cfg.epsilon = std::stod(value);
      else if (key == "alpha") cfg.alpha = std::stod(value);
      else if (key == "steps") cfg.steps = std::stoi(value);
      else if (key == "patch_fraction") cfg.patch_fraction = std::stod(value);
      else if (key == "b") cfg.b = std::stoi(value);
      else if (key == "b_sweep") cfg.b_sweep = split_ints(value);
      else if (key == "attack_seed") cfg.attack_seed = std::stoull(value);
      else if (key == "doc_id") cfg.doc_id = std::stoi(value);
      else if (key == "out_dir") cfg.out_dir = value;
      else if (key == "params_path") cfg.params_path = value;
      else if (key == "workers") cfg.workers = std::stoi(value);
      else throw std::invalid_argument("unknown key");
    } catch (const std::exception& e) {
      throw std::runtime_error("config: " + path + ":" + std::to_string(lineno) + ": bad entry '" +
                               key + "': " + e.what());
    }
  }
  return cfg;
}

void write_config_echo(const ExperimentConfig& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream f(dir + "/config_used.txt");
  if (!f) throw std::runtime_error("config: cannot write echo in " + dir);
  f << cfg.echo();
}

ModelConfig make_model_config(const ExperimentConfig& cfg) {
  cfg.validate();
  ModelConfig mc;
  mc.patch = cfg.patch;
  mc.embed_dim = cfg.embed_dim;
  mc.hidden_dim = cfg.hidden_dim;
  mc.encoder_layers = cfg.encoder_layers;
  mc.decoder_layers = cfg.decoder_layers;
  mc.max_answer_len = cfg.max_answer_len;
  mc.encoder_kind = cfg.encoder == "mixer" ? EncoderKind::Mixer : EncoderKind::Attention;
  mc.positional_cross_keys = cfg.positional_keys;
  if (cfg.style == "headered") {
    mc.question_mode = QuestionMode::Headered;
    mc.preprocess = PreprocessSpec::headered(cfg.target_width, cfg.target_height, cfg.header_height);
  } else {
    mc.question_mode = QuestionMode::Prompted;
    mc.preprocess = PreprocessSpec::padded(cfg.target_width, cfg.target_height);
  }
  mc.validate();
  return mc;
}

AttackScenario make_scenario(const ExperimentConfig& cfg, const RasterDocument& doc, int b) {
  ScenarioKind kind = ScenarioKind::TargetedSingle;
  if (cfg.scenario == "targeted_multi") kind = ScenarioKind::TargetedMulti;
  if (cfg.scenario == "denial_of_answer") kind = ScenarioKind::DenialOfAnswer;
  if (kind == ScenarioKind::TargetedSingle && b > 1) kind = ScenarioKind::TargetedMulti;

  AttackScenario s = build_scenario(kind, doc, b, default_target_pool());
  const AttackDefaults defaults = attack_defaults(
      cfg.style == "headered" ? QuestionMode::Headered : QuestionMode::Prompted,
      cfg.patch_fraction > 0.0);
  if (kind != ScenarioKind::DenialOfAnswer)
    s.loss = cfg.loss == "auto" ? defaults.loss
                                : (cfg.loss == "nll" ? LossKind::Nll : LossKind::LogitMargin);
  s.alpha = cfg.alpha > 0.0 ? cfg.alpha : defaults.alpha;
  s.steps = cfg.steps >= 0 ? cfg.steps : defaults.steps;
  s.validate(doc);
  return s;
}

FeasibleSet make_feasible_set(const ExperimentConfig& cfg, const RasterDocument& doc) {
  const AttackDefaults defaults = attack_defaults(
      cfg.style == "headered" ? QuestionMode::Headered : QuestionMode::Prompted,
      cfg.patch_fraction > 0.0);
  FeasibleSet fs;
  fs.epsilon = cfg.epsilon >= 0.0 ? cfg.epsilon : defaults.epsilon;
  if (cfg.patch_fraction > 0.0) fs.mask = patch_region(doc, cfg.patch_fraction);
  fs.validate();
  return fs;
}

std::vector<RasterDocument> experiment_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<RasterDocument> docs;
  const int n = cfg.train_docs + cfg.eval_docs;
  // canvas extents ride on the document specs; regenerate with the configured size
  std::vector<RasterDocument> base = make_dataset(n, cfg.dataset_seed);
  if (cfg.canvas_width == 256 && cfg.canvas_height == 384) return base;
  docs.reserve(base.size());
  for (int i = 0; i < n; ++i) {
    DocumentSpec spec = random_spec(Rng::mix(cfg.dataset_seed, static_cast<std::uint64_t>(i)));
    spec.canvas_width = cfg.canvas_width;
    spec.canvas_height = cfg.canvas_height;
    RasterDocument doc = render_document(spec);
    doc.id = i;
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::vector<RasterDocument> train_split(const std::vector<RasterDocument>& all,
                                        const ExperimentConfig& cfg) {
  return {all.begin(), all.begin() + cfg.train_docs};
}

std::vector<RasterDocument> eval_split(const std::vector<RasterDocument>& all,
                                       const ExperimentConfig& cfg) {
  return {all.begin() + cfg.train_docs, all.end()};
}

int cmd_gen(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::vector<RasterDocument> docs = experiment_dataset(cfg);
  save_dataset(docs, cfg.out_dir + "/dataset");
  write_config_echo(cfg, cfg.out_dir);
  return static_cast<int>(docs.size());
}

TrainArtifacts cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const std::vector<RasterDocument> all = experiment_dataset(cfg);
  const std::vector<RasterDocument> train = train_split(all, cfg);
  const std::vector<RasterDocument> heldout = eval_split(all, cfg);

  TrainOptions opts;
  opts.epochs = cfg.epochs;
  opts.learning_rate = cfg.learning_rate;
  opts.batch_size = cfg.batch_size;
  opts.optimizer = cfg.optimizer == "adam" ? TrainOptions::Optimizer::Adam
                                           : TrainOptions::Optimizer::Sgd;
  opts.stop_loss = cfg.stop_loss;
  opts.workers = cfg.workers;

  TrainArtifacts art;
  ModelParams params = train_model(make_model_config(cfg), train, opts, cfg.train_seed, &art.log);
  art.params_path = cfg.params_path.empty() ? cfg.out_dir + "/model.bin" : cfg.params_path;
  save_params(params, art.params_path);
  art.heldout_exact_match = exact_match_rate(params, heldout);

  std::ofstream log(cfg.out_dir + "/training_log.csv");
  log << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < art.log.epoch_loss.size(); ++e)
    log << e << "," << art.log.epoch_loss[e] << "\n";
  log << "# heldout_exact_match=" << art.heldout_exact_match << "\n";
  write_config_echo(cfg, cfg.out_dir);
  return art;
}

double cmd_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.params_path.empty()) throw std::invalid_argument("eval: params_path is required");
  const ModelParams params = load_params(cfg.params_path);
  const std::vector<RasterDocument> all = experiment_dataset(cfg);
  const std::vector<RasterDocument> docs = eval_split(all, cfg);

  std::vector<QAOutcome> outcomes;
  for (const RasterDocument& doc : docs)
    for (std::size_t j = 0; j < doc.qa.size(); ++j) {
      QAOutcome o;
      o.doc_id = doc.id;
      o.pair_index = static_cast<int>(j);
      o.prediction = answer(params, doc.image, doc.qa[j].question);
      o.ground_truth = doc.qa[j].answer;
      o.optimized = false;
      outcomes.push_back(std::move(o));
    }
  const auto score = anls(outcomes, AnlsReference::GroundTruth, AnlsSubset::All, 0.5);

  std::filesystem::create_directories(cfg.out_dir);
  nlohmann::json j;
  j["anls_baseline"] = score ? nlohmann::json(*score) : nlohmann::json();
  j["n_docs"] = static_cast<int>(docs.size());
  j["tau"] = 0.5;
  std::ofstream f(cfg.out_dir + "/eval.json");
  f << j.dump(2) << "\n";
  write_config_echo(cfg, cfg.out_dir);
  return score.value_or(0.0);
}

DocAttackOutcome attack_document(const ModelParams& params, const RasterDocument& doc,
                                 const AttackScenario& scenario, const FeasibleSet& fs,
                                 std::uint64_t seed) {
  DocAttackOutcome out;
  out.result = pgd_attack(params, doc, scenario, fs, seed);
  const ImageU8 adv = out.result.adversarial_image();
  for (std::size_t j = 0; j < doc.qa.size(); ++j) {
    QAOutcome o;
    o.doc_id = doc.id;
    o.pair_index = static_cast<int>(j);
    o.ground_truth = doc.qa[j].answer;
    const auto it = std::find(scenario.qa_indices.begin(), scenario.qa_indices.end(),
                              static_cast<int>(j));
    o.optimized = it != scenario.qa_indices.end();
    if (o.optimized) {
      const std::size_t pos = static_cast<std::size_t>(it - scenario.qa_indices.begin());
      o.prediction = out.result.final_answers[pos];
      if (scenario.kind != ScenarioKind::DenialOfAnswer) o.target = scenario.targets[pos];
    } else {
      o.prediction = answer(params, adv, doc.qa[j].question);
    }
    out.outcomes.push_back(std::move(o));
  }
  return out;
}

AttackArtifacts cmd_attack(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.params_path.empty()) throw std::invalid_argument("attack: params_path is required");
  const ModelParams params = load_params(cfg.params_path);
  const std::vector<RasterDocument> all = experiment_dataset(cfg);
  const std::vector<RasterDocument> docs = eval_split(all, cfg);
  if (cfg.doc_id < 0 || cfg.doc_id >= static_cast<int>(docs.size()))
    throw std::invalid_argument("attack: doc_id outside the evaluation split");
  const RasterDocument& doc = docs[static_cast<std::size_t>(cfg.doc_id)];

  const AttackScenario scenario = make_scenario(cfg, doc, cfg.b);
  const FeasibleSet fs = make_feasible_set(cfg, doc);

  AttackArtifacts art;
  art.result = pgd_attack(params, doc, scenario, fs, cfg.attack_seed);

  std::filesystem::create_directories(cfg.out_dir);
  art.png_path = cfg.out_dir + "/adv_doc_" + std::to_string(doc.id) + ".png";
  write_png(art.png_path, art.result.adversarial_image());

  // Reload the saved file and judge again through the reference pipeline.
  const ImageU8 reloaded = read_png(art.png_path);
  art.reload_success = true;
  std::vector<std::string> reload_answers;
  for (std::size_t pos = 0; pos < scenario.qa_indices.size(); ++pos) {
    const QAPair& qa = doc.qa[static_cast<std::size_t>(scenario.qa_indices[pos])];
    const std::string pred = answer(params, reloaded, qa.question);
    reload_answers.push_back(pred);
    const bool ok = scenario.kind == ScenarioKind::DenialOfAnswer ? pred != qa.answer
                                                                  : pred == scenario.targets[pos];
    art.reload_success = art.reload_success && ok;
  }
  art.verdict_divergence = art.reload_success != art.result.success;

  nlohmann::json j;
  j["doc_id"] = doc.id;
  j["scenario"] = cfg.scenario;
  j["b"] = cfg.b;
  j["gamma"] = scenario.gamma;
  j["loss"] = scenario.loss == LossKind::Nll ? "nll" : "logit_margin";
  j["epsilon"] = fs.epsilon;
  j["alpha"] = scenario.alpha;
  j["steps"] = scenario.steps;
  j["patch"] = cfg.patch_fraction > 0.0;
  j["loss_trajectory"] = art.result.loss_trajectory;
  j["targets"] = scenario.targets;
  j["answers"] = art.result.final_answers;
  j["answers_after_reload"] = reload_answers;
  j["success_flags"] = art.result.success_flags;
  j["success"] = art.result.success;
  j["success_after_reload"] = art.reload_success;
  j["verdict_divergence"] = art.verdict_divergence;
  j["png"] = art.png_path;
  art.json_path = cfg.out_dir + "/attack_doc_" + std::to_string(doc.id) + ".json";
  std::ofstream f(art.json_path);
  f << j.dump(2) << "\n";
  write_config_echo(cfg, cfg.out_dir);
  return art;
}

EvalReport cmd_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.params_path.empty()) throw std::invalid_argument("sweep: params_path is required");
  const ModelParams params = load_params(cfg.params_path);
  const std::vector<RasterDocument> all = experiment_dataset(cfg);
  const std::vector<RasterDocument> docs = eval_split(all, cfg);

  // Clean baseline, shared across every row of the sweep.
  std::vector<QAOutcome> clean;
  for (const RasterDocument& doc : docs)
    for (std::size_t j = 0; j < doc.qa.size(); ++j) {
      QAOutcome o;
      o.doc_id = doc.id;
      o.pair_index = static_cast<int>(j);
      o.prediction = answer(params, doc.image, doc.qa[j].question);
      o.ground_truth = doc.qa[j].answer;
      clean.push_back(std::move(o));
    }
  const double anls_baseline =
      anls(clean, AnlsReference::GroundTruth, AnlsSubset::All, 0.5).value_or(0.0);

  EvalReport report;
  report.scenario = cfg.scenario;
  report.style = cfg.style;
  report.setting = cfg.patch_fraction > 0.0 ? "patch" : "full";
  report.n_docs = static_cast<int>(docs.size());

  const bool doa = cfg.scenario == "denial_of_answer";
  for (int b : cfg.b_sweep) {
    std::vector<std::vector<QAOutcome>> per_doc(docs.size());
    std::vector<std::string> loss_name(docs.size());
    parallel_for(static_cast<int>(docs.size()), cfg.workers, [&](int i) {
      const RasterDocument& doc = docs[static_cast<std::size_t>(i)];
      const AttackScenario scenario = make_scenario(cfg, doc, b);
      const FeasibleSet fs = make_feasible_set(cfg, doc);
      loss_name[static_cast<std::size_t>(i)] =
          scenario.loss == LossKind::Nll ? "nll" : "logit_margin";
      per_doc[static_cast<std::size_t>(i)] =
          attack_document(params, doc, scenario, fs, Rng::mix(cfg.attack_seed, doc.id)).outcomes;
    });
    report.loss = loss_name.empty() ? "nll" : loss_name[0];

    std::vector<QAOutcome> outcomes;
    for (const auto& v : per_doc) outcomes.insert(outcomes.end(), v.begin(), v.end());

    SweepRow row;
    row.b = b;
    row.asr = asr(outcomes, doa ? AsrMode::Untargeted : AsrMode::Targeted);
    row.cdmg = cdmg(outcomes);
    row.anls_baseline = anls_baseline;
    row.anls_b = anls(outcomes, doa ? AnlsReference::GroundTruth : AnlsReference::Targets,
                      AnlsSubset::Optimized, 0.5)
                     .value_or(0.0);
    row.anls_c = anls(outcomes, AnlsReference::GroundTruth, AnlsSubset::HeldOut, 0.5);
    report.rows.push_back(row);
  }

  write_report(report, cfg.out_dir, "report");
  write_config_echo(cfg, cfg.out_dir);
  return report;
}

int cmd_render_report(const std::string& report_json_path, const std::string& out_dir) {
  std::ifstream f(report_json_path);
  if (!f) throw std::runtime_error("render-report: cannot open " + report_json_path);
  std::stringstream buf;
  buf << f.rdbuf();
  const EvalReport report = report_from_json(buf.str());
  write_report(report, out_dir, "report");
  return static_cast<int>(report.rows.size());
}

}  // namespace dvqa
