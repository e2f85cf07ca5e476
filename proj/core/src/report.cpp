#include "dvqa/report.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dvqa {

namespace {

std::string cell(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string cell(const std::optional<double>& v) { return v ? cell(*v) : "undefined"; }

}  // namespace

std::string report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "scenario,loss,style,setting,n_docs,b,asr,cdmg,anls_baseline,anls_b,anls_c\n";
  for (const SweepRow& row : r.rows) {
    os << r.scenario << ',' << r.loss << ',' << r.style << ',' << r.setting << ',' << r.n_docs
       << ',' << row.b << ',' << cell(row.asr) << ',' << cell(row.cdmg) << ','
       << cell(row.anls_baseline) << ',' << cell(row.anls_b) << ',' << cell(row.anls_c) << '\n';
  }
  return os.str();
}

std::string report_json(const EvalReport& r) {
  nlohmann::json j;
  j["scenario"] = r.scenario;
  j["loss"] = r.loss;
  j["style"] = r.style;
  j["setting"] = r.setting;
  j["n_docs"] = r.n_docs;
  j["rows"] = nlohmann::json::array();
  for (const SweepRow& row : r.rows) {
    nlohmann::json o;
    o["b"] = row.b;
    o["asr"] = row.asr;
    o["cdmg"] = row.cdmg ? nlohmann::json(*row.cdmg) : nlohmann::json();
    o["anls_baseline"] = row.anls_baseline;
    o["anls_b"] = row.anls_b;
    o["anls_c"] = row.anls_c ? nlohmann::json(*row.anls_c) : nlohmann::json();
    j["rows"].push_back(o);
  }
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  EvalReport r;
  r.scenario = j.at("scenario").get<std::string>();
  r.loss = j.at("loss").get<std::string>();
  r.style = j.at("style").get<std::string>();
  r.setting = j.at("setting").get<std::string>();
  r.n_docs = j.at("n_docs").get<int>();
  for (const auto& o : j.at("rows")) {
    SweepRow row;
    row.b = o.at("b").get<int>();
    row.asr = o.at("asr").get<double>();
    if (!o.at("cdmg").is_null()) row.cdmg = o.at("cdmg").get<double>();
    row.anls_baseline = o.at("anls_baseline").get<double>();
    row.anls_b = o.at("anls_b").get<double>();
    if (!o.at("anls_c").is_null()) row.anls_c = o.at("anls_c").get<double>();
    r.rows.push_back(row);
  }
  return r;
}

std::string report_text(const EvalReport& r) {
  std::ostringstream os;
  os << r.scenario << " / " << r.loss << " / " << r.style << " / " << r.setting << " over "
     << r.n_docs << " docs\n";
  os << "  B      ASR     CDMG    ANLS-base  ANLS-B   ANLS-C\n";
  for (const SweepRow& row : r.rows) {
    auto fmt = [](const std::string& s) {
      std::string out = s;
      out.resize(9, ' ');
      return out;
    };
    os << "  " << row.b << "  " << fmt(cell(row.asr)) << fmt(cell(row.cdmg))
       << fmt(cell(row.anls_baseline)) << fmt(cell(row.anls_b)) << fmt(cell(row.anls_c)) << "\n";
  }
  return os.str();
}

std::string report_svg(const EvalReport& r) {
  const int width = 640, height = 420;
  const int left = 60, right = 30, top = 50, bottom = 50;
  const int plot_w = width - left - right, plot_h = height - top - bottom;

  int b_min = 1, b_max = 1;
  for (const SweepRow& row : r.rows) {
    b_min = std::min(b_min, row.b);
    b_max = std::max(b_max, row.b);
  }
  if (b_max == b_min) b_max = b_min + 1;

  auto px = [&](double b) {
    return left + plot_w * (b - b_min) / static_cast<double>(b_max - b_min);
  };
  auto py = [&](double v) { return top + plot_h * (1.0 - v); };

  struct Series {
    const char* name;
    const char* color;
    std::vector<std::pair<double, double>> pts;
  };
  std::vector<Series> series = {{"ASR", "#d62728", {}},
                                {"CDMG", "#9467bd", {}},
                                {"ANLS-baseline", "#7f7f7f", {}},
                                {"ANLS-B", "#1f77b4", {}},
                                {"ANLS-C", "#2ca02c", {}}};
  for (const SweepRow& row : r.rows) {
    series[0].pts.emplace_back(row.b, row.asr);
    if (row.cdmg) series[1].pts.emplace_back(row.b, *row.cdmg);
    series[2].pts.emplace_back(row.b, row.anls_baseline);
    series[3].pts.emplace_back(row.b, row.anls_b);
    if (row.anls_c) series[4].pts.emplace_back(row.b, *row.anls_c);
  }

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << left << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
     << r.scenario << " / " << r.loss << " / " << r.style << " / " << r.setting << " (N="
     << r.n_docs << ")</text>\n";

  // frame and gridlines
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    os << "<line x1=\"" << left << "\" y1=\"" << py(v) << "\" x2=\"" << left + plot_w << "\" y2=\""
       << py(v) << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << py(v) + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << cell(v).substr(0, 3)
       << "</text>\n";
  }
  for (int b = b_min; b <= b_max; ++b) {
    os << "<text x=\"" << px(b) << "\" y=\"" << top + plot_h + 18
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << b
       << "</text>\n";
  }
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">B (optimized QA "
        "pairs)</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\""
     << plot_h << "\" fill=\"none\" stroke=\"#333333\"/>\n";

  int legend_y = top + 8;
  for (const Series& s : series) {
    if (s.pts.empty()) continue;
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [b, v] : s.pts) os << px(b) << ',' << py(v) << ' ';
    os << "\"/>\n";
    for (const auto& [b, v] : s.pts)
      os << "<circle cx=\"" << px(b) << "\" cy=\"" << py(v) << "\" r=\"3\" fill=\"" << s.color
         << "\"/>\n";
    os << "<rect x=\"" << left + plot_w - 130 << "\" y=\"" << legend_y - 9
       << "\" width=\"10\" height=\"10\" fill=\"" << s.color << "\"/>\n";
    os << "<text x=\"" << left + plot_w - 115 << "\" y=\"" << legend_y
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.name << "</text>\n";
    legend_y += 16;
  }
  os << "</svg>\n";
  return os.str();
}

void write_report(const EvalReport& report, const std::string& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  auto dump = [&](const std::string& ext, const std::string& body) {
    const std::string path = dir + "/" + stem + ext;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("report: cannot write " + path);
    f << body;
  };
  dump(".csv", report_csv(report));
  dump(".json", report_json(report));
  dump(".txt", report_text(report));
  dump(".svg", report_svg(report));
}

}  // namespace dvqa
