#include "cogscreen/render.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cogscreen/error.hpp"
#include "cogscreen/metrics.hpp"
#include "cogscreen/util.hpp"

namespace cogscreen::render {
namespace {

namespace fs = std::filesystem;
using metrics::CurveKind;
using metrics::CurveSeries;

constexpr std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                              "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

constexpr std::array<CurveKind, 6> kSheetKinds{CurveKind::Roc,        CurveKind::Pr,
                                               CurveKind::Gains,      CurveKind::PpvProfile,
                                               CurveKind::SensitivityProfile, CurveKind::Density};

bool is_eval(const nlohmann::json& doc) { return doc.contains("per_seed") && doc.contains("model_kind"); }
bool is_quality(const nlohmann::json& doc) { return doc.value("format", "") == "cogscreen-quality"; }

std::string num(double v) {
  // Plot coordinates only need a few digits; keep the files small and stable.
  if (std::abs(v) < 5e-7) return "0";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string esc(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Bounds {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
};

struct Line {
  std::string label;
  std::vector<metrics::CurvePoint> points;
  bool dashed = false;
};

const char* axis_names(CurveKind kind, bool x) {
  switch (kind) {
    case CurveKind::Roc: return x ? "false positive rate" : "true positive rate";
    case CurveKind::Pr: return x ? "recall" : "precision";
    case CurveKind::Gains: return x ? "fraction of samples" : "fraction of cases";
    case CurveKind::PpvProfile: return x ? "score percentile" : "PPV";
    case CurveKind::SensitivityProfile: return x ? "score percentile" : "sensitivity";
    case CurveKind::Density: return x ? "p(case)" : "density";
  }
  return "";
}

class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {}

  void text(double x, double y, std::string_view s, double size = 12, const char* anchor = "middle") {
    body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << num(size)
          << "\" text-anchor=\"" << anchor << "\">" << esc(s) << "</text>\n";
  }
  void rect(double x, double y, double w, double h, const char* fill, const char* stroke = "none") {
    body_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(w) << "\" height=\"" << num(h)
          << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const char* stroke) {
    body_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
          << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void raw(const std::string& s) { body_ << s; }

  // Axes box at (x, y, w, h) whose curves are drawn in data coordinates.
  void plot(double x, double y, double w, double h, const std::string& title, CurveKind kind, const Bounds& b,
            const std::vector<Line>& lines, bool chance_diagonal) {
    rect(x, y, w, h, "white", "#333");
    text(x + w / 2, y - 8, title, 13);
    text(x + w / 2, y + h + 30, axis_names(kind, true), 11);
    body_ << "<text x=\"" << num(x - 34) << "\" y=\"" << num(y + h / 2) << "\" font-size=\"11\" text-anchor=\"middle\""
          << " transform=\"rotate(-90 " << num(x - 34) << " " << num(y + h / 2) << ")\">" << esc(axis_names(kind, false))
          << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
      const double fx = b.x0 + (b.x1 - b.x0) * i / 4.0;
      const double fy = b.y0 + (b.y1 - b.y0) * i / 4.0;
      text(x + w * i / 4.0, y + h + 14, num(fx), 10);
      text(x - 6, y + h - h * i / 4.0 + 3, num(fy), 10, "end");
    }
    const double sx = w / (b.x1 - b.x0);
    const double sy = h / (b.y1 - b.y0);
    body_ << "<g transform=\"translate(" << num(x) << " " << num(y + h) << ") scale(" << num(sx) << " " << num(-sy)
          << ") translate(" << num(-b.x0) << " " << num(-b.y0) << ")\" fill=\"none\">\n";
    if (chance_diagonal) {
      body_ << "<path class=\"chance\" d=\"M0,0 L1,1\" stroke=\"#bbb\" stroke-dasharray=\"4 3\""
               " vector-effect=\"non-scaling-stroke\"/>\n";
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto& l = lines[i];
      if (l.points.empty()) continue;
      body_ << "<path data-series=\"" << esc(l.label) << "\" d=\"";
      for (std::size_t k = 0; k < l.points.size(); ++k) {
        body_ << (k == 0 ? "M" : " L") << num(l.points[k].x) << "," << num(l.points[k].y);
      }
      body_ << "\" stroke=\"" << kPalette[i % kPalette.size()] << "\" stroke-width=\"2\""
            << (l.dashed ? " stroke-dasharray=\"5 3\"" : "") << " vector-effect=\"non-scaling-stroke\"/>\n";
    }
    body_ << "</g>\n";
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const double ly = y + 14 + 14 * static_cast<double>(i);
      body_ << "<line x1=\"" << num(x + w - 150) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(x + w - 132)
            << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << kPalette[i % kPalette.size()] << "\" stroke-width=\"2\"/>\n";
      text(x + w - 128, ly, lines[i].label, 10, "start");
    }
  }

  std::string str() const {
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w_) << "\" height=\"" << num(h_)
      << "\" viewBox=\"0 0 " << num(w_) << " " << num(h_) << "\" font-family=\"sans-serif\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << body_.str() << "</svg>\n";
    return o.str();
  }

 private:
  double w_, h_;
  std::ostringstream body_;
};

struct Bar {
  std::string label;
  double value = 0;
  double err = 0;
};

std::string bar_chart(const std::string& title, const std::string& ylabel, const std::vector<Bar>& bars) {
  const double left = 70, top = 40, ph = 260, bw = 46, gap = 24;
  const double pw = std::max(200.0, static_cast<double>(bars.size()) * (bw + gap) + gap);
  Svg svg(left + pw + 30, top + ph + 120);
  double ymax = 1.0;
  for (const auto& b : bars) ymax = std::max(ymax, b.value + b.err);
  svg.rect(left, top, pw, ph, "white", "#333");
  svg.text(left + pw / 2, top - 14, title, 14);
  svg.raw("<text x=\"20\" y=\"" + num(top + ph / 2) + "\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 20 " +
          num(top + ph / 2) + ")\">" + esc(ylabel) + "</text>\n");
  for (int i = 0; i <= 4; ++i) {
    const double yy = top + ph - ph * i / 4.0;
    svg.line(left - 4, yy, left, yy, "#333");
    svg.text(left - 6, yy + 3, num(ymax * i / 4.0), 10, "end");
  }
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& b = bars[i];
    const double x = left + gap + static_cast<double>(i) * (bw + gap);
    const double h = ph * b.value / ymax;
    svg.rect(x, top + ph - h, bw, h, kPalette[i % kPalette.size()]);
    if (b.err > 0) {
      const double cx = x + bw / 2;
      const double hi = top + ph - ph * (b.value + b.err) / ymax;
      const double lo = top + ph - ph * std::max(0.0, b.value - b.err) / ymax;
      svg.line(cx, hi, cx, lo, "#000");
      svg.line(cx - 6, hi, cx + 6, hi, "#000");
      svg.line(cx - 6, lo, cx + 6, lo, "#000");
    }
    svg.text(x + bw / 2, top + ph - h - 4, num(std::round(b.value * 1000) / 1000), 10);
    const double lx = x + bw / 2, ly = top + ph + 14;
    svg.raw("<text x=\"" + num(lx) + "\" y=\"" + num(ly) + "\" font-size=\"10\" text-anchor=\"end\" transform=\"rotate(-35 " +
            num(lx) + " " + num(ly) + ")\">" + esc(b.label) + "</text>\n");
  }
  return svg.str();
}

std::vector<CurveSeries> curves_of(const nlohmann::json& doc) {
  std::vector<CurveSeries> out;
  for (const auto& c : doc.value("curves", nlohmann::json::array())) out.push_back(metrics::curve_from_json(c));
  return out;
}

Bounds bounds_for(CurveKind kind, const std::vector<Line>& lines) {
  Bounds b;
  if (kind == CurveKind::PpvProfile || kind == CurveKind::SensitivityProfile) b.x1 = 100;
  if (kind == CurveKind::Density) {
    double ymax = 0;
    for (const auto& l : lines) {
      for (const auto& p : l.points) ymax = std::max(ymax, p.y);
    }
    b.y1 = ymax > 0 ? std::ceil(ymax * 1.1 * 10) / 10 : 1.0;
  }
  if (kind != CurveKind::Density) {
    double xmax = b.x1;
    for (const auto& l : lines) {
      for (const auto& p : l.points) xmax = std::max(xmax, p.x);
    }
    b.x1 = xmax;
  }
  return b;
}

std::vector<Line> lines_of_kind(const std::vector<std::pair<std::string, std::vector<CurveSeries>>>& evals,
                                CurveKind kind) {
  std::vector<Line> lines;
  for (const auto& [label, curves] : evals) {
    for (const auto& c : curves) {
      if (c.kind != kind || c.empty) continue;
      Line l;
      l.label = label;
      if (kind == CurveKind::Density) {
        const auto slash = c.name.rfind('/');
        const auto cls = slash == std::string::npos ? c.name : c.name.substr(slash + 1);
        l.label += " " + cls;
        l.dashed = cls == "control";
      }
      l.points = c.points;
      lines.push_back(std::move(l));
    }
  }
  return lines;
}

double metric_of(const nlohmann::json& doc, std::initializer_list<const char*> keys, double* std_out) {
  const auto& agg = doc.at("aggregate");
  for (const char* k : keys) {
    if (agg.contains(k)) {
      *std_out = agg[k].value("std", 0.0);
      return agg[k].at("mean").get<double>();
    }
  }
  *std_out = 0;
  return std::nan("");
}

}  // namespace

std::vector<ReportInput> load_reports(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::InvalidArgument, "reports directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ReportInput> out;
  for (const auto& f : files) {
    const auto doc = nlohmann::json::parse(read_file(f), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) continue;
    const bool eval = f.filename() == "report.json" && is_eval(doc);
    if (!eval && !is_quality(doc)) continue;
    auto label = fs::relative(f.parent_path(), dir).generic_string();
    if (label == ".") label = "report";
    if (is_quality(doc)) label += (label.empty() ? "" : "/") + doc.value("metric", std::string("quality"));
    out.push_back({label, doc});
  }
  if (out.empty()) throw Error(ErrorKind::InvalidArgument, "no reports found under " + dir.string());
  return out;
}

std::map<std::string, std::string> render_report(const std::vector<ReportInput>& reports) {
  if (reports.empty()) throw Error(ErrorKind::InvalidArgument, "no reports to render");
  std::map<std::string, std::string> files;

  std::vector<std::pair<std::string, std::vector<CurveSeries>>> evals;
  std::vector<std::string> missing;
  for (const auto& r : reports) {
    if (!is_eval(r.doc)) continue;
    auto curves = curves_of(r.doc);
    for (const auto kind : kSheetKinds) {
      const auto n = std::count_if(curves.begin(), curves.end(), [&](const auto& c) { return c.kind == kind; });
      const std::size_t want = kind == CurveKind::Density ? 2 : 1;
      if (static_cast<std::size_t>(n) < want) missing.push_back(r.label + ":" + std::string(metrics::to_string(kind)));
    }
    evals.emplace_back(r.label, std::move(curves));
  }
  if (!missing.empty()) {
    std::string msg = "missing curve series:";
    for (const auto& m : missing) msg += " " + m;
    throw Error(ErrorKind::MissingSeries, msg);
  }

  // Consolidated metrics.
  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  std::string csv = "report,model_kind,dataset,metric,mean,std\n";
  std::string curves_csv = "report,kind,name,x,y\n";
  for (const auto& r : reports) {
    if (!is_eval(r.doc)) continue;
    nlohmann::ordered_json row;
    row["report"] = r.label;
    row["model_kind"] = r.doc.at("model_kind");
    row["dataset"] = r.doc.value("dataset", "");
    row["aggregate"] = r.doc.at("aggregate");
    summary.push_back(row);
    for (const auto& [metric, ms] : r.doc.at("aggregate").items()) {
      csv += csv_escape(r.label) + "," + csv_escape(r.doc.at("model_kind").get<std::string>()) + "," +
             csv_escape(r.doc.value("dataset", "")) + "," + csv_escape(metric) + "," +
             format_double(ms.at("mean").get<double>()) + "," + format_double(ms.value("std", 0.0)) + "\n";
    }
    for (const auto& c : curves_of(r.doc)) {
      for (const auto& p : c.points) {
        curves_csv += csv_escape(r.label) + "," + std::string(metrics::to_string(c.kind)) + "," + csv_escape(c.name) +
                      "," + format_double(p.x) + "," + format_double(p.y) + "\n";
      }
    }
  }

  if (!evals.empty()) {
    files["summary.json"] = summary.dump(2) + "\n";
    files["summary.csv"] = csv;
    files["curves.csv"] = curves_csv;

    std::vector<Bar> bars;
    for (const auto& r : reports) {
      if (!is_eval(r.doc)) continue;
      Bar b{r.label, 0, 0};
      b.value = metric_of(r.doc, {"test_f1", "f1"}, &b.err);
      if (std::isfinite(b.value)) bars.push_back(b);
    }
    files["f1_bars.svg"] = bar_chart("Test F1 (mean over seeds)", "F1", bars);

    {
      Svg svg(520, 500);
      const auto lines = lines_of_kind(evals, CurveKind::Roc);
      svg.plot(70, 40, 400, 400, "ROC", CurveKind::Roc, bounds_for(CurveKind::Roc, lines), lines, true);
      files["roc.svg"] = svg.str();
    }
    {
      const double pw = 300, ph = 240, gx = 90, gy = 90;
      Svg svg(3 * pw + 4 * gx - 40, 2 * ph + 3 * gy - 20);
      for (std::size_t i = 0; i < kSheetKinds.size(); ++i) {
        const auto kind = kSheetKinds[i];
        const auto lines = lines_of_kind(evals, kind);
        const double x = gx + static_cast<double>(i % 3) * (pw + gx);
        const double y = 50 + static_cast<double>(i / 3) * (ph + gy);
        svg.plot(x, y, pw, ph, std::string(metrics::to_string(kind)), kind, bounds_for(kind, lines), lines,
                 kind == CurveKind::Roc);
      }
      files["sheet.svg"] = svg.str();
    }
  }

  // Text-similarity figures.
  std::vector<Bar> bleu_bars, bert_bars;
  std::string quality_csv = "report,metric,key,value\n";
  bool any_quality = false;
  for (const auto& r : reports) {
    if (!is_quality(r.doc)) continue;
    any_quality = true;
    const auto metric = r.doc.value("metric", "");
    if (metric == "bleu") {
      const auto& s = r.doc.at("overall").at("score");
      for (std::size_t n = 0; n < s.size(); ++n) {
        bleu_bars.push_back({r.label + " BLEU-" + std::to_string(n + 1), s[n].get<double>(), 0});
        quality_csv += csv_escape(r.label) + ",bleu,bleu_" + std::to_string(n + 1) + "," + format_double(s[n].get<double>()) + "\n";
      }
    } else if (metric == "bertscore") {
      for (const char* k : {"precision", "recall", "f1"}) {
        const double v = r.doc.at("overall").at(k).get<double>();
        bert_bars.push_back({r.label + " " + k, v, 0});
        quality_csv += csv_escape(r.label) + ",bertscore," + k + "," + format_double(v) + "\n";
      }
    } else if (metric == "tsne") {
      const auto& pts = r.doc.at("points");
      std::map<std::string, std::vector<metrics::CurvePoint>> groups;
      double lo = 0, hi = 0;
      for (const auto& p : pts) {
        const double x = p.at("x").get<double>(), y = p.at("y").get<double>();
        groups[p.at("group").get<std::string>()].push_back({x, y});
        lo = std::min({lo, x, y});
        hi = std::max({hi, x, y});
      }
      const double pad = (hi - lo) * 0.05 + 1e-9;
      Svg svg(560, 540);
      const double px = 60, py = 40, pw = 440, ph = 440;
      svg.rect(px, py, pw, ph, "white", "#333");
      svg.text(px + pw / 2, py - 12, "t-SNE: " + r.label, 13);
      std::size_t gi = 0;
      for (const auto& [name, points] : groups) {
        const auto* color = kPalette[gi % kPalette.size()];
        for (const auto& p : points) {
          const double cx = px + pw * (p.x - lo + pad) / (hi - lo + 2 * pad);
          const double cy = py + ph - ph * (p.y - lo + pad) / (hi - lo + 2 * pad);
          svg.raw("<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"3\" fill=\"" + color +
                  "\" fill-opacity=\"0.7\"/>\n");
        }
        svg.rect(px + pw - 130, py + 10 + 16 * static_cast<double>(gi), 10, 10, color);
        svg.text(px + pw - 115, py + 19 + 16 * static_cast<double>(gi), name, 10, "start");
        ++gi;
      }
      auto name = r.label;
      std::replace(name.begin(), name.end(), '/', '_');
      files["tsne_" + name + ".svg"] = svg.str();
      quality_csv += csv_escape(r.label) + ",tsne,overall_mixing," +
                     format_double(r.doc.at("overlap").at("overall_mixing").get<double>()) + "\n";
    }
  }
  if (!bleu_bars.empty()) files["bleu_bars.svg"] = bar_chart("BLEU against real transcripts", "score", bleu_bars);
  if (!bert_bars.empty()) files["bertscore_bars.svg"] = bar_chart("BERTScore against real transcripts", "score", bert_bars);
  if (any_quality) files["quality.csv"] = quality_csv;
  return files;
}

void write_rendered(const std::map<std::string, std::string>& files, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  for (const auto& [name, content] : files) write_file(out_dir / name, content);
}

}  // namespace cogscreen::render
