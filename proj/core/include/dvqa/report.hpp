#pragma once

#include <optional>
#include <string>
#include <vector>

namespace dvqa {

struct SweepRow {
  int b = 0;
  double asr = 0.0;
  std::optional<double> cdmg;      // undefined when every pair is optimized
  double anls_baseline = 0.0;
  double anls_b = 0.0;
  std::optional<double> anls_c;    // undefined when every pair is optimized
};

struct EvalReport {
  std::string scenario;  // targeted_single | targeted_multi | denial_of_answer
  std::string loss;      // nll | logit_margin
  std::string style;     // headered | prompted
  std::string setting;   // full | patch
  int n_docs = 0;
  std::vector<SweepRow> rows;
};

// One row per B value; undefined cells carry the literal word "undefined".
std::string report_csv(const EvalReport& report);
std::string report_json(const EvalReport& report);
std::string report_text(const EvalReport& report);
// Self-contained line chart of every metric against B.
std::string report_svg(const EvalReport& report);

EvalReport report_from_json(const std::string& text);

// <stem>.csv/.json/.txt/.svg under dir.
void write_report(const EvalReport& report, const std::string& dir, const std::string& stem);

}  // namespace dvqa
