#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cogscreen/types.hpp"

namespace cogscreen::metrics {

struct ScoredPrediction {
  std::string id;
  Label true_label = Label::Control;
  double p_case = 0.0;
  std::uint64_t seed = 0;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

// Case is positive; p_case >= threshold predicts Case. Zero denominators
// give 0 rather than NaN.
Confusion confusion_f1(std::span<const ScoredPrediction> preds, double threshold = 0.5);

enum class CurveKind { Roc, Pr, Gains, PpvProfile, SensitivityProfile, Density };

std::string_view to_string(CurveKind kind);
std::optional<CurveKind> parse_curve_kind(std::string_view name);

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const CurvePoint&) const = default;
};

struct CurveSeries {
  CurveKind kind = CurveKind::Roc;
  std::string name;  // e.g. "test" or "test/case"
  std::vector<CurvePoint> points;
  std::optional<double> summary;  // AUC for ROC, average precision for PR
  bool empty = false;             // density series of a class with no samples
};

struct RocResult {
  CurveSeries curve;
  double auc = 0.0;
};

// Threshold sweep over distinct scores, from (0,0) to (1,1). The trapezoid
// area is accumulated in integers, so it equals the Mann-Whitney statistic
// (ties count 1/2) bit for bit. Throws SingleClass.
RocResult roc_auc(std::span<const ScoredPrediction> preds);

// (recall, precision) after each distinct score in descending order. Throws
// NoPositives.
CurveSeries pr_curve(std::span<const ScoredPrediction> preds);

// Fraction of positives captured against fraction of samples taken in
// descending p_case; ties broken by ascending id. Starts at (0,0).
CurveSeries cumulative_gains(std::span<const ScoredPrediction> preds);

struct ThresholdPoint {
  double threshold = 0.0;
  double ppv = 0.0;
  double sensitivity = 0.0;
};

ThresholdPoint profile_at(std::span<const ScoredPrediction> preds, double threshold);

struct Profiles {
  CurveSeries ppv;
  CurveSeries sensitivity;
};

std::vector<double> default_percentile_grid();

// Threshold at each score percentile (linear interpolation); x = percentile.
Profiles score_profiles(std::span<const ScoredPrediction> preds,
                        std::span<const double> percentile_grid);

// Per-class normalized histograms over [0,1]: {case, control}.
std::array<CurveSeries, 2> density(std::span<const ScoredPrediction> preds, std::size_t bins = 20);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // n-1; 0 for a single seed
};

// Throws InvalidArgument when seeds report different metric keys.
std::map<std::string, MeanStd> aggregate_seeds(const std::vector<std::map<std::string, double>>& per_seed);

// Report document shared by training, augmentation sweeps and the judge.
struct EvalReport {
  std::string model_kind;
  std::string dataset;
  std::vector<std::pair<std::uint64_t, std::map<std::string, double>>> per_seed;
  std::map<std::string, MeanStd> aggregate;
  std::vector<CurveSeries> curves;
  std::vector<ScoredPrediction> predictions;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

nlohmann::ordered_json to_json(const CurveSeries& curve);
CurveSeries curve_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

// Standard curve set for one prediction list: roc, pr, gains, ppv and
// sensitivity profiles, and both density series. Curves whose preconditions
// fail (e.g. a single class) are omitted.
std::vector<CurveSeries> standard_curves(std::span<const ScoredPrediction> preds,
                                         const std::string& name);

std::string curves_to_csv(const std::vector<CurveSeries>& curves);

}  // namespace cogscreen::metrics
