#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cogscreen::textsim {

using Tokens = std::vector<std::string>;

struct BleuReport {
  int max_n = 4;
  std::array<double, 4> precision{};  // clipped n-gram precision p_n
  std::array<double, 4> score{};      // BP * p_n
  double brevity_penalty = 1.0;
  double geometric = 0.0;  // BP * exp(mean log p_n) over n <= max_n; 0 if any p_n is 0
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
};

// Corpus-level BLEU. references[i] are the references of candidates[i]; the
// effective reference length of a candidate is the closest reference length
// (shorter wins ties). An order with no candidate n-grams has p_n = 0.
// Throws InvalidArgument for an empty candidate list, a size mismatch or
// max_n outside 1..4.
BleuReport bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                int max_n = 4);

enum class ReferencePolicy { AllSameLabel, Nearest };

// Nearest keeps the single pool entry with the highest clipped unigram
// overlap with the candidate (earliest on ties).
std::vector<Tokens> select_references(const Tokens& candidate, const std::vector<Tokens>& pool,
                                      ReferencePolicy policy);

using TokenMatrix = std::vector<std::vector<double>>;

struct IdfWeights {
  std::map<std::string, double> weights;
  double default_weight = 0.0;  // for tokens absent from the reference documents
};

// idf(w) = log((M + 1) / (df(w) + 1)) over M reference documents.
IdfWeights compute_idf(const std::vector<Tokens>& documents);

struct BertScoreReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Greedy cosine matching. With idf the means become idf-weighted means, and
// the token strings select the weights. Throws DimMismatch, InvalidArgument
// (empty input, ragged strings) or NumericalFailure (zero-norm row).
BertScoreReport bertscore(const TokenMatrix& cand, const TokenMatrix& ref, const IdfWeights* idf = nullptr,
                          const Tokens& cand_tokens = {}, const Tokens& ref_tokens = {});

using Matrix = std::vector<std::vector<double>>;
using Point2 = std::array<double, 2>;

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double exaggeration = 12.0;
  int exaggeration_iters = 250;
  double learning_rate = 200.0;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  std::uint64_t seed = 0;
  int kl_every = 50;
};

struct TsneResult {
  std::vector<Point2> coords;
  double kl = 0.0;
  // (iteration, KL) sampled every kl_every iterations after exaggeration ends.
  std::vector<std::pair<int, double>> kl_history;
  bool jittered = false;
};

struct Affinities {
  Matrix p;  // row-conditional probabilities p_{j|i}
  std::vector<double> beta;  // 1 / (2 sigma^2)
};

// Binary search on beta so that each row's entropy is within 1e-5 of
// log(perplexity).
Affinities perplexity_search(const Matrix& sq_distances, double perplexity);

Matrix squared_distances(const Matrix& x);

// Exact O(n^2) t-SNE. Throws InsufficientSamples (n < 3), InvalidArgument
// (perplexity >= n) and DimMismatch (ragged rows). Identical inputs get a
// seeded 1e-6 jitter and a warning.
TsneResult tsne(const Matrix& x, const TsneConfig& cfg = {});

// Mean silhouette over all points; singleton clusters contribute 0.
double silhouette(const std::vector<Point2>& points, const std::vector<int>& labels);

struct Group {
  std::string name;
  std::vector<Point2> points;
};

struct OverlapReport {
  std::size_t k = 0;  // after clamping
  std::vector<Point2> centroids;
  std::map<std::pair<std::string, std::string>, double> centroid_distance;
  std::map<std::string, double> mixing;  // per group
  double overall_mixing = 0.0;
};

// k-NN mixing: fraction of each point's k nearest neighbours (itself
// excluded, index order on ties) that belong to another group. k is clamped
// to the smallest group size and to n - 1.
OverlapReport overlap_report(const std::vector<Group>& groups, std::size_t k = 10);

}  // namespace cogscreen::textsim
