#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dvqa/experiment.hpp"
#include "dvqa/report.hpp"

using namespace dvqa;

namespace {

std::filesystem::path temp_dir(const std::string& leaf) {
  auto dir = std::filesystem::temp_directory_path() / leaf;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

EvalReport sample_report() {
  EvalReport r;
  r.scenario = "targeted_multi";
  r.loss = "nll";
  r.style = "headered";
  r.setting = "full";
  r.n_docs = 16;
  for (int b = 1; b <= 5; ++b) {
    SweepRow row;
    row.b = b;
    row.asr = 1.0 - 0.15 * b;
    if (b < 5) row.cdmg = 0.02 * b;
    row.anls_baseline = 0.97;
    row.anls_b = 0.9 - 0.1 * b;
    if (b < 5) row.anls_c = 0.95;
    r.rows.push_back(row);
  }
  return r;
}

}  // namespace

TEST_CASE("config files round trip through the echo") {
  const auto dir = temp_dir("dvqa_cfg_test");
  ExperimentConfig cfg;
  cfg.train_docs = 12;
  cfg.eval_docs = 3;
  cfg.style = "prompted";
  cfg.epsilon = 32.0;
  cfg.b_sweep = {1, 3, 5};
  cfg.out_dir = (dir / "run").string();
  cfg.params_path = (dir / "m.bin").string();

  const auto path = dir / "config.txt";
  {
    std::ofstream f(path);
    f << "# comment line\n" << cfg.echo();
  }
  const ExperimentConfig back = load_config(path.string());
  CHECK(back.train_docs == 12);
  CHECK(back.eval_docs == 3);
  CHECK(back.style == "prompted");
  CHECK(back.epsilon == 32.0);
  CHECK(back.b_sweep == std::vector<int>{1, 3, 5});
  CHECK(back.params_path == cfg.params_path);

  std::filesystem::remove_all(dir);
}

TEST_CASE("config validation rejects bad enums") {
  ExperimentConfig cfg;
  cfg.style = "sideways";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.style = "headered";
  cfg.scenario = "total_chaos";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.scenario = "targeted_single";
  cfg.b_sweep = {0};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("unknown config keys are reported with their line") {
  const auto dir = temp_dir("dvqa_cfg_bad");
  const auto path = dir / "config.txt";
  {
    std::ofstream f(path);
    f << "train_docs=4\nnot_a_key=1\n";
  }
  CHECK_THROWS_WITH_AS(load_config(path.string()), doctest::Contains("not_a_key"),
                       std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("report serializations agree and mark undefined cells") {
  const EvalReport r = sample_report();

  const std::string csv = report_csv(r);
  CHECK(csv.find("scenario,loss,style,setting,n_docs,b,asr,cdmg") == 0);
  // B = 5 row carries the undefined markers for cdmg and anls_c
  const std::size_t last = csv.rfind("targeted_multi");
  CHECK(csv.find("undefined", last) != std::string::npos);

  const EvalReport back = report_from_json(report_json(r));
  CHECK(back.scenario == r.scenario);
  REQUIRE(back.rows.size() == r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    CHECK(back.rows[i].b == r.rows[i].b);
    CHECK(back.rows[i].asr == doctest::Approx(r.rows[i].asr));
    CHECK(back.rows[i].cdmg.has_value() == r.rows[i].cdmg.has_value());
    CHECK(back.rows[i].anls_c.has_value() == r.rows[i].anls_c.has_value());
  }

  const std::string svg = report_svg(r);
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("ASR") != std::string::npos);

  CHECK(report_text(r).find("undefined") != std::string::npos);
}

TEST_CASE("report files land on disk and re-render") {
  const auto dir = temp_dir("dvqa_report_test");
  write_report(sample_report(), dir.string(), "report");
  for (const char* ext : {".csv", ".json", ".txt", ".svg"})
    CHECK(std::filesystem::exists(dir / (std::string("report") + ext)));

  const auto render_dir = dir / "rerender";
  CHECK(cmd_render_report((dir / "report.json").string(), render_dir.string()) == 5);
  CHECK(std::filesystem::exists(render_dir / "report.svg"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("report emission is a pure function of its inputs") {
  const EvalReport r = sample_report();
  CHECK(report_csv(r) == report_csv(r));
  CHECK(report_json(r) == report_json(r));
  CHECK(report_svg(r) == report_svg(r));
}

TEST_CASE("gen writes a dataset with a manifest and config echo") {
  const auto dir = temp_dir("dvqa_gen_test");
  ExperimentConfig cfg;
  cfg.train_docs = 2;
  cfg.eval_docs = 1;
  cfg.out_dir = dir.string();
  CHECK(cmd_gen(cfg) == 3);
  CHECK(std::filesystem::exists(dir / "dataset" / "doc_0000.png"));
  CHECK(std::filesystem::exists(dir / "dataset" / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "config_used.txt"));

  // the echo reloads into an equivalent config
  const ExperimentConfig echoed = load_config((dir / "config_used.txt").string());
  CHECK(echoed.train_docs == cfg.train_docs);
  std::filesystem::remove_all(dir);
}

TEST_CASE("experiment splits are disjoint and sized as configured") {
  ExperimentConfig cfg;
  cfg.train_docs = 5;
  cfg.eval_docs = 3;
  const auto all = experiment_dataset(cfg);
  REQUIRE(all.size() == 8);
  const auto train = train_split(all, cfg);
  const auto eval = eval_split(all, cfg);
  CHECK(train.size() == 5);
  CHECK(eval.size() == 3);
  CHECK(train.back().id + 1 == eval.front().id);
}

TEST_CASE("scenario and feasible-set factories honor style defaults") {
  ExperimentConfig cfg;
  cfg.style = "headered";
  const auto all = experiment_dataset(cfg);
  const RasterDocument& doc = all.front();

  const AttackScenario s = make_scenario(cfg, doc, 1);
  CHECK(s.loss == LossKind::Nll);
  CHECK(s.alpha == 2.0);
  CHECK(s.steps == 20);
  const FeasibleSet fs = make_feasible_set(cfg, doc);
  CHECK(fs.epsilon == 8.0);
  CHECK(!fs.mask.has_value());

  ExperimentConfig patch_cfg = cfg;
  patch_cfg.patch_fraction = 0.15;
  const FeasibleSet pfs = make_feasible_set(patch_cfg, doc);
  CHECK(pfs.epsilon == 96.0);
  REQUIRE(pfs.mask.has_value());
  CHECK(pfs.mask->height == 38);  // floor(0.15 * 256)

  // a multi-pair request under the single-answer scenario name promotes itself
  const AttackScenario multi = make_scenario(cfg, doc, 3);
  CHECK(multi.kind == ScenarioKind::TargetedMulti);
  CHECK(multi.qa_indices.size() == 3);
}
