#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cogscreen/corpus.hpp"
#include "cogscreen/lexicon.hpp"
#include "cogscreen/postag.hpp"

namespace cogscreen::lingfeat {

inline constexpr std::size_t kFeatureCount = 110;

enum class Dimension { LexicalRichness, SyntacticComplexity, Fluency, Psycholinguistic };

enum class FeatureKind {
  Ratio,   // always within [0, 1]
  Count,   // non-negative integer
  Scalar,  // other finite value
};

// How a feature responds when a sentence-terminated text is concatenated with
// itself.
enum class Duplication { Invariant, Doubles, NonIncreasing, Unconstrained };

struct FeatureSpec {
  std::string name;
  Dimension dimension;
  FeatureKind kind;
  Duplication duplication;
  std::string definition;
  bool nominal = false;  // the default variant where several measure one construct
};

std::string_view to_string(Dimension d);
std::string_view to_string(FeatureKind k);
std::string_view to_string(Duplication d);

// Frozen, ordered registry of the 110 features (registry version 1):
// richness 24, syntax 39, fluency 25, psycholinguistic 22.
const std::vector<FeatureSpec>& feature_registry();
std::optional<std::size_t> feature_index(std::string_view name);
inline constexpr int kRegistryVersion = 1;

using FeatureVector = std::array<double, kFeatureCount>;

// Features with a zero denominator take the value 0 (logged at warn level).
FeatureVector extract_features(std::string_view text, const CategoryLexicon& lexicon,
                               const PosTagger& tagger);
FeatureVector extract_features(const corpus::Transcript& transcript,
                               const CategoryLexicon& lexicon, const PosTagger& tagger);

// Column-wise z-scoring with population standard deviation. Zero-variance
// columns map to 0.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  std::vector<double> apply(const std::vector<double>& row) const;
};

Standardizer fit_standardizer(const std::vector<std::vector<double>>& rows);

struct FeatureMatrix {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> raw;
  std::vector<std::vector<double>> standardized;
  Standardizer params;
};

// Fits standardization on this view unless train-split params are supplied.
FeatureMatrix feature_matrix(const std::vector<corpus::Transcript>& view,
                             const CategoryLexicon& lexicon, const PosTagger& tagger,
                             const std::optional<Standardizer>& params = std::nullopt);

// id plus the 110 registry columns; values use shortest round-trip decimals.
std::string features_to_csv(const std::vector<std::string>& ids,
                            const std::vector<std::vector<double>>& rows);

}  // namespace cogscreen::lingfeat
