#include "cogscreen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cogscreen/error.hpp"
#include "cogscreen/util.hpp"

namespace cogscreen::metrics {
namespace {

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

struct ClassCounts {
  std::uint64_t pos = 0;
  std::uint64_t neg = 0;
};

ClassCounts count_classes(std::span<const ScoredPrediction> preds) {
  ClassCounts c;
  for (const auto& p : preds) {
    if (p.true_label == Label::Case) {
      ++c.pos;
    } else {
      ++c.neg;
    }
  }
  return c;
}

std::vector<const ScoredPrediction*> by_score_desc(std::span<const ScoredPrediction> preds) {
  std::vector<const ScoredPrediction*> order;
  order.reserve(preds.size());
  for (const auto& p : preds) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    if (a->p_case != b->p_case) return a->p_case > b->p_case;
    return a->id < b->id;
  });
  return order;
}

}  // namespace

std::string_view to_string(CurveKind kind) {
  switch (kind) {
    case CurveKind::Roc: return "roc";
    case CurveKind::Pr: return "pr";
    case CurveKind::Gains: return "gains";
    case CurveKind::PpvProfile: return "ppv_profile";
    case CurveKind::SensitivityProfile: return "sensitivity_profile";
    case CurveKind::Density: return "density";
  }
  return "";
}

std::optional<CurveKind> parse_curve_kind(std::string_view name) {
  for (auto k : {CurveKind::Roc, CurveKind::Pr, CurveKind::Gains, CurveKind::PpvProfile,
                 CurveKind::SensitivityProfile, CurveKind::Density}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

Confusion confusion_f1(std::span<const ScoredPrediction> preds, double threshold) {
  Confusion c;
  for (const auto& p : preds) {
    const bool predicted_case = p.p_case >= threshold;
    const bool is_case = p.true_label == Label::Case;
    if (predicted_case && is_case) ++c.tp;
    else if (predicted_case) ++c.fp;
    else if (is_case) ++c.fn;
    else ++c.tn;
  }
  c.precision = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  c.recall = safe_div(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  c.f1 = safe_div(2.0 * c.precision * c.recall, c.precision + c.recall);
  return c;
}

RocResult roc_auc(std::span<const ScoredPrediction> preds) {
  const auto counts = count_classes(preds);
  if (counts.pos == 0 || counts.neg == 0) {
    throw Error(ErrorKind::SingleClass, "ROC requires both Case and Control samples");
  }
  const auto order = by_score_desc(preds);
  RocResult r;
  r.curve.kind = CurveKind::Roc;
  r.curve.points.push_back({0.0, 0.0});
  std::uint64_t tp = 0, fp = 0, area2 = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::uint64_t group_tp = 0, group_fp = 0;
    const double score = order[i]->p_case;
    for (; i < order.size() && order[i]->p_case == score; ++i) {
      if (order[i]->true_label == Label::Case) ++group_tp;
      else ++group_fp;
    }
    area2 += group_fp * (2 * tp + group_tp);
    tp += group_tp;
    fp += group_fp;
    r.curve.points.push_back({static_cast<double>(fp) / static_cast<double>(counts.neg),
                              static_cast<double>(tp) / static_cast<double>(counts.pos)});
  }
  r.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(counts.pos) *
                                        static_cast<double>(counts.neg));
  r.curve.summary = r.auc;
  return r;
}

CurveSeries pr_curve(std::span<const ScoredPrediction> preds) {
  const auto counts = count_classes(preds);
  if (counts.pos == 0) throw Error(ErrorKind::NoPositives, "PR curve requires at least one Case");
  const auto order = by_score_desc(preds);
  CurveSeries c;
  c.kind = CurveKind::Pr;
  std::uint64_t tp = 0, fp = 0;
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double score = order[i]->p_case;
    for (; i < order.size() && order[i]->p_case == score; ++i) {
      if (order[i]->true_label == Label::Case) ++tp;
      else ++fp;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(counts.pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    c.points.push_back({recall, precision});
  }
  c.summary = ap;
  return c;
}

CurveSeries cumulative_gains(std::span<const ScoredPrediction> preds) {
  const auto counts = count_classes(preds);
  if (counts.pos == 0) throw Error(ErrorKind::NoPositives, "gains curve requires at least one Case");
  const auto order = by_score_desc(preds);
  CurveSeries c;
  c.kind = CurveKind::Gains;
  c.points.push_back({0.0, 0.0});
  std::uint64_t captured = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (order[k]->true_label == Label::Case) ++captured;
    c.points.push_back({static_cast<double>(k + 1) / static_cast<double>(order.size()),
                        static_cast<double>(captured) / static_cast<double>(counts.pos)});
  }
  return c;
}

ThresholdPoint profile_at(std::span<const ScoredPrediction> preds, double threshold) {
  const auto conf = confusion_f1(preds, threshold);
  return {threshold, conf.precision, conf.recall};
}

std::vector<double> default_percentile_grid() {
  std::vector<double> grid;
  for (int q = 0; q <= 100; q += 5) grid.push_back(q);
  return grid;
}

Profiles score_profiles(std::span<const ScoredPrediction> preds, std::span<const double> grid) {
  const auto counts = count_classes(preds);
  if (counts.pos == 0 || counts.neg == 0) {
    throw Error(ErrorKind::SingleClass, "score profiles require both classes");
  }
  std::vector<double> scores;
  for (const auto& p : preds) scores.push_back(p.p_case);
  Profiles out;
  out.ppv.kind = CurveKind::PpvProfile;
  out.sensitivity.kind = CurveKind::SensitivityProfile;
  for (double q : grid) {
    const auto point = profile_at(preds, quantile(scores, q / 100.0));
    out.ppv.points.push_back({q, point.ppv});
    out.sensitivity.points.push_back({q, point.sensitivity});
  }
  return out;
}

std::array<CurveSeries, 2> density(std::span<const ScoredPrediction> preds, std::size_t bins) {
  if (bins == 0) throw Error(ErrorKind::InvalidArgument, "density needs at least one bin");
  std::array<CurveSeries, 2> out;
  for (auto label : {Label::Case, Label::Control}) {
    auto& series = out[static_cast<std::size_t>(label_index(label))];
    series.kind = CurveKind::Density;
    std::vector<double> mass(bins, 0.0);
    double total = 0.0;
    for (const auto& p : preds) {
      if (p.true_label != label) continue;
      const auto bin = std::min(bins - 1, static_cast<std::size_t>(std::floor(p.p_case * static_cast<double>(bins))));
      mass[bin] += 1.0;
      total += 1.0;
    }
    if (total == 0.0) {
      series.empty = true;
      continue;
    }
    for (std::size_t b = 0; b < bins; ++b) {
      series.points.push_back({(static_cast<double>(b) + 0.5) / static_cast<double>(bins), mass[b] / total});
    }
  }
  return out;
}

std::map<std::string, MeanStd> aggregate_seeds(const std::vector<std::map<std::string, double>>& per_seed) {
  if (per_seed.empty()) throw Error(ErrorKind::InvalidArgument, "aggregate_seeds needs at least one seed");
  std::map<std::string, MeanStd> out;
  for (const auto& [key, value] : per_seed.front()) {
    std::vector<double> values;
    for (const auto& seed_metrics : per_seed) {
      const auto it = seed_metrics.find(key);
      if (it == seed_metrics.end() || seed_metrics.size() != per_seed.front().size()) {
        throw Error(ErrorKind::InvalidArgument, "inconsistent metric keys across seeds (" + key + ")");
      }
      values.push_back(it->second);
    }
    out[key] = MeanStd{mean(values), sample_std(values)};
  }
  return out;
}

nlohmann::ordered_json to_json(const CurveSeries& curve) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(curve.kind);
  j["name"] = curve.name;
  auto pts = nlohmann::ordered_json::array();
  for (const auto& p : curve.points) pts.push_back({p.x, p.y});
  j["points"] = std::move(pts);
  if (curve.summary) j["summary"] = *curve.summary;
  if (curve.empty) j["empty"] = true;
  return j;
}

CurveSeries curve_from_json(const nlohmann::json& j) {
  CurveSeries c;
  const auto kind = parse_curve_kind(j.at("kind").get<std::string>());
  if (!kind) throw Error(ErrorKind::SchemaError, "unknown curve kind " + j.at("kind").dump());
  c.kind = *kind;
  c.name = j.value("name", "");
  for (const auto& p : j.at("points")) c.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  if (j.contains("summary")) c.summary = j["summary"].get<double>();
  c.empty = j.value("empty", false);
  return c;
}

nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["model_kind"] = report.model_kind;
  j["dataset"] = report.dataset;
  nlohmann::ordered_json per_seed = nlohmann::ordered_json::object();
  for (const auto& [seed, values] : report.per_seed) {
    nlohmann::ordered_json m = nlohmann::ordered_json::object();
    for (const auto& [k, v] : values) m[k] = v;
    per_seed[std::to_string(seed)] = std::move(m);
  }
  j["per_seed"] = std::move(per_seed);
  nlohmann::ordered_json agg = nlohmann::ordered_json::object();
  for (const auto& [k, ms] : report.aggregate) agg[k] = {{"mean", ms.mean}, {"std", ms.std}};
  j["aggregate"] = std::move(agg);
  auto curves = nlohmann::ordered_json::array();
  for (const auto& c : report.curves) curves.push_back(to_json(c));
  j["curves"] = std::move(curves);
  auto preds = nlohmann::ordered_json::array();
  for (const auto& p : report.predictions) {
    preds.push_back({{"id", p.id}, {"label", to_string(p.true_label)}, {"p_case", p.p_case}, {"seed", p.seed}});
  }
  j["predictions"] = std::move(preds);
  if (!report.extra.empty()) j["extra"] = report.extra;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.model_kind = j.value("model_kind", "");
  r.dataset = j.value("dataset", "");
  if (j.contains("per_seed")) {
    for (const auto& [seed, values] : j["per_seed"].items()) {
      std::map<std::string, double> m;
      for (const auto& [k, v] : values.items()) m[k] = v.get<double>();
      r.per_seed.emplace_back(std::stoull(seed), std::move(m));
    }
  }
  if (j.contains("aggregate")) {
    for (const auto& [k, v] : j["aggregate"].items()) {
      r.aggregate[k] = MeanStd{v.at("mean").get<double>(), v.at("std").get<double>()};
    }
  }
  if (j.contains("curves")) {
    for (const auto& c : j["curves"]) r.curves.push_back(curve_from_json(c));
  }
  if (j.contains("predictions")) {
    for (const auto& p : j["predictions"]) {
      ScoredPrediction sp;
      sp.id = p.at("id").get<std::string>();
      const auto label = parse_label_name(p.at("label").get<std::string>());
      if (!label) throw Error(ErrorKind::SchemaError, "bad label in report prediction " + sp.id);
      sp.true_label = *label;
      sp.p_case = p.at("p_case").get<double>();
      sp.seed = p.value("seed", std::uint64_t{0});
      r.predictions.push_back(std::move(sp));
    }
  }
  if (j.contains("extra")) r.extra = nlohmann::ordered_json::parse(j["extra"].dump());
  return r;
}

std::vector<CurveSeries> standard_curves(std::span<const ScoredPrediction> preds, const std::string& name) {
  std::vector<CurveSeries> out;
  const auto counts = count_classes(preds);
  if (counts.pos > 0 && counts.neg > 0) {
    auto roc = roc_auc(preds).curve;
    roc.name = name;
    out.push_back(std::move(roc));
  }
  if (counts.pos > 0) {
    auto pr = pr_curve(preds);
    pr.name = name;
    out.push_back(std::move(pr));
    auto gains = cumulative_gains(preds);
    gains.name = name;
    out.push_back(std::move(gains));
  }
  if (counts.pos > 0 && counts.neg > 0) {
    const auto grid = default_percentile_grid();
    auto profiles = score_profiles(preds, grid);
    profiles.ppv.name = name;
    profiles.sensitivity.name = name;
    out.push_back(std::move(profiles.ppv));
    out.push_back(std::move(profiles.sensitivity));
  }
  auto dens = density(preds);
  dens[0].name = name + "/case";
  dens[1].name = name + "/control";
  out.push_back(std::move(dens[0]));
  out.push_back(std::move(dens[1]));
  return out;
}

std::string curves_to_csv(const std::vector<CurveSeries>& curves) {
  std::string out = "kind,name,x,y\n";
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      out += std::string(to_string(c.kind)) + "," + csv_escape(c.name) + "," + format_double(p.x) + "," +
             format_double(p.y) + "\n";
    }
  }
  return out;
}

}  // namespace cogscreen::metrics
