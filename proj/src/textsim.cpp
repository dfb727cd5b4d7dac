#include "cogscreen/textsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "cogscreen/error.hpp"
#include "cogscreen/rng.hpp"

namespace cogscreen::textsim {
namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

// (clipped matches, candidate n-gram total)
std::pair<std::size_t, std::size_t> clipped(const Tokens& cand, const std::vector<Tokens>& refs, std::size_t n) {
  const auto c = ngrams(cand, n);
  NgramCounts max_ref;
  for (const auto& r : refs) {
    for (const auto& [g, count] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], count);
  }
  std::size_t matched = 0, total = 0;
  for (const auto& [g, count] : c) {
    total += count;
    const auto it = max_ref.find(g);
    if (it != max_ref.end()) matched += std::min(count, it->second);
  }
  return {matched, total};
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double kl_divergence(const Matrix& p, const Matrix& num, double z) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (i == j || p[i][j] <= 0.0) continue;
      const double q = std::max(num[i][j] / z, 1e-300);
      kl += p[i][j] * std::log(p[i][j] / q);
    }
  }
  return kl;
}

}  // namespace

BleuReport bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                int max_n) {
  if (candidates.empty()) throw Error(ErrorKind::InvalidArgument, "BLEU needs at least one candidate");
  if (candidates.size() != references.size()) {
    throw Error(ErrorKind::InvalidArgument, "BLEU: one reference list per candidate is required");
  }
  if (max_n < 1 || max_n > 4) throw Error(ErrorKind::InvalidArgument, "BLEU order must be in 1..4");
  BleuReport r;
  r.max_n = max_n;
  std::array<std::size_t, 4> matched{}, total{};
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) throw Error(ErrorKind::InvalidArgument, "candidate " + std::to_string(i) + " has no reference");
    r.candidate_length += cand.size();
    std::size_t best = refs.front().size();
    for (const auto& ref : refs) {
      const auto d_new = ref.size() > cand.size() ? ref.size() - cand.size() : cand.size() - ref.size();
      const auto d_best = best > cand.size() ? best - cand.size() : cand.size() - best;
      if (d_new < d_best || (d_new == d_best && ref.size() < best)) best = ref.size();
    }
    r.reference_length += best;
    for (int n = 1; n <= max_n; ++n) {
      const auto [m, t] = clipped(cand, refs, static_cast<std::size_t>(n));
      matched[static_cast<std::size_t>(n - 1)] += m;
      total[static_cast<std::size_t>(n - 1)] += t;
    }
  }
  const double c = static_cast<double>(r.candidate_length);
  const double ref_len = static_cast<double>(r.reference_length);
  r.brevity_penalty = c >= ref_len ? 1.0 : (c == 0.0 ? 0.0 : std::exp(1.0 - ref_len / c));
  double log_sum = 0.0;
  bool any_zero = false;
  for (int n = 1; n <= max_n; ++n) {
    const auto k = static_cast<std::size_t>(n - 1);
    r.precision[k] = total[k] == 0 ? 0.0 : static_cast<double>(matched[k]) / static_cast<double>(total[k]);
    r.score[k] = r.brevity_penalty * r.precision[k];
    if (r.precision[k] == 0.0) any_zero = true;
    else log_sum += std::log(r.precision[k]);
  }
  r.geometric = any_zero ? 0.0 : r.brevity_penalty * std::exp(log_sum / max_n);
  return r;
}

std::vector<Tokens> select_references(const Tokens& candidate, const std::vector<Tokens>& pool,
                                      ReferencePolicy policy) {
  if (pool.empty()) throw Error(ErrorKind::InvalidArgument, "reference pool is empty");
  if (policy == ReferencePolicy::AllSameLabel) return pool;
  std::size_t best = 0, best_match = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto m = clipped(candidate, {pool[i]}, 1).first;
    if (m > best_match) {
      best_match = m;
      best = i;
    }
  }
  return {pool[best]};
}

IdfWeights compute_idf(const std::vector<Tokens>& documents) {
  IdfWeights idf;
  const double m = static_cast<double>(documents.size());
  std::map<std::string, std::size_t> df;
  for (const auto& doc : documents) {
    for (const auto& w : std::set<std::string>(doc.begin(), doc.end())) ++df[w];
  }
  for (const auto& [w, count] : df) idf.weights[w] = std::log((m + 1.0) / (static_cast<double>(count) + 1.0));
  idf.default_weight = std::log(m + 1.0);
  return idf;
}

BertScoreReport bertscore(const TokenMatrix& cand, const TokenMatrix& ref, const IdfWeights* idf,
                          const Tokens& cand_tokens, const Tokens& ref_tokens) {
  if (cand.empty() || ref.empty()) throw Error(ErrorKind::InvalidArgument, "BERTScore needs non-empty inputs");
  const auto dim = cand.front().size();
  auto normalize = [dim](const TokenMatrix& m, const char* which) {
    TokenMatrix out;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i].size() != dim) throw Error(ErrorKind::DimMismatch, std::string(which) + " token dimension mismatch");
      const double n = norm(m[i]);
      if (n == 0.0 || !std::isfinite(n)) {
        throw Error(ErrorKind::NumericalFailure, std::string(which) + " token " + std::to_string(i) + " has zero norm");
      }
      std::vector<double> row(m[i]);
      for (auto& x : row) x /= n;
      out.push_back(std::move(row));
    }
    return out;
  };
  const auto c = normalize(cand, "candidate");
  const auto r = normalize(ref, "reference");

  auto weights = [idf](const Tokens& tokens, std::size_t n, const char* which) {
    std::vector<double> w(n, 1.0);
    if (idf == nullptr) return w;
    if (tokens.size() != n) {
      throw Error(ErrorKind::InvalidArgument, std::string(which) + " token strings do not align with rows");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto it = idf->weights.find(tokens[i]);
      w[i] = it == idf->weights.end() ? idf->default_weight : it->second;
    }
    return w;
  };
  const auto wc = weights(cand_tokens, c.size(), "candidate");
  const auto wr = weights(ref_tokens, r.size(), "reference");

  Matrix sim(c.size(), std::vector<double>(r.size()));
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += c[i][k] * r[j][k];
      sim[i][j] = s;
    }
  }
  auto weighted_greedy = [&](bool over_candidate) {
    const auto& w = over_candidate ? wc : wr;
    const std::size_t n = over_candidate ? c.size() : r.size();
    const std::size_t m = over_candidate ? r.size() : c.size();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) best = std::max(best, over_candidate ? sim[i][j] : sim[j][i]);
      num += w[i] * best;
      den += w[i];
    }
    return den == 0.0 ? 0.0 : num / den;
  };
  BertScoreReport out;
  out.precision = weighted_greedy(true);
  out.recall = weighted_greedy(false);
  const double s = out.precision + out.recall;
  out.f1 = s == 0.0 ? 0.0 : 2.0 * out.precision * out.recall / s;
  return out;
}

Matrix squared_distances(const Matrix& x) {
  const auto n = x.size();
  Matrix d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i].size() != x.front().size()) throw Error(ErrorKind::DimMismatch, "t-SNE input rows differ in length");
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x[i].size(); ++k) {
        const double diff = x[i][k] - x[j][k];
        s += diff * diff;
      }
      d[i][j] = d[j][i] = s;
    }
  }
  return d;
}

Affinities perplexity_search(const Matrix& d, double perplexity) {
  const auto n = d.size();
  const double target = std::log(perplexity);
  Affinities a;
  a.p.assign(n, std::vector<double>(n, 0.0));
  a.beta.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    // Shifting by the nearest distance keeps exp() from underflowing.
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dmin = std::min(dmin, d[i][j]);
    }
    std::vector<double>& row = a.p[i];
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0, weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) {
          row[j] = 0.0;
          continue;
        }
        row[j] = std::exp(-beta * (d[i][j] - dmin));
        sum += row[j];
        weighted += (d[i][j] - dmin) * row[j];
      }
      // H = log(sum) + beta * E[d - dmin]
      const double h = std::log(sum) + beta * weighted / sum;
      for (auto& v : row) v /= sum;
      const double diff = h - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
    a.beta[i] = beta;
  }
  return a;
}

TsneResult tsne(const Matrix& x_in, const TsneConfig& cfg) {
  const auto n = x_in.size();
  if (n < 3) throw Error(ErrorKind::InsufficientSamples, "t-SNE needs at least 3 points");
  if (!(cfg.perplexity > 0.0) || cfg.perplexity >= static_cast<double>(n)) {
    throw Error(ErrorKind::InvalidArgument, "perplexity must be positive and below the number of points");
  }
  TsneResult result;
  Matrix x = x_in;
  auto d = squared_distances(x);
  bool all_identical = true;
  for (std::size_t i = 0; i < n && all_identical; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (d[i][j] != 0.0) {
        all_identical = false;
        break;
      }
    }
  }
  if (all_identical) {
    spdlog::warn("t-SNE input points are all identical; adding 1e-6 jitter");
    Rng jitter(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    for (auto& row : x) {
      for (auto& v : row) v += 1e-6 * jitter.normal();
    }
    d = squared_distances(x);
    result.jittered = true;
  }

  // Rounding to float precision removes the coordinate-frame rounding noise,
  // so rotated or translated inputs yield identical affinities.
  for (auto& row : d) {
    for (auto& v : row) v = static_cast<double>(static_cast<float>(v));
  }
  const auto aff = perplexity_search(d, cfg.perplexity);
  Matrix p(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) p[i][j] = std::max((aff.p[i][j] + aff.p[j][i]) / (2.0 * static_cast<double>(n)), 1e-12);
    }
  }

  Rng rng(cfg.seed);
  std::vector<Point2> y(n), update(n, {0.0, 0.0}), gains(n, {1.0, 1.0});
  for (auto& pt : y) pt = {1e-4 * rng.normal(), 1e-4 * rng.normal()};

  Matrix num(n, std::vector<double>(n, 0.0));
  auto compute_q = [&]() {
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y[i][0] - y[j][0];
        const double dy = y[i][1] - y[j][1];
        const double v = 1.0 / (1.0 + dx * dx + dy * dy);
        num[i][j] = num[j][i] = v;
        z += 2.0 * v;
      }
    }
    return z;
  };

  for (int it = 0; it < cfg.iterations; ++it) {
    const bool early = it < cfg.exaggeration_iters;
    const double exag = early ? cfg.exaggeration : 1.0;
    const double momentum = early ? cfg.initial_momentum : cfg.final_momentum;
    const double z = compute_q();
    for (std::size_t i = 0; i < n; ++i) {
      Point2 grad{0.0, 0.0};
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double mult = (exag * p[i][j] - num[i][j] / z) * num[i][j];
        grad[0] += mult * (y[i][0] - y[j][0]);
        grad[1] += mult * (y[i][1] - y[j][1]);
      }
      for (int k = 0; k < 2; ++k) {
        const double g = 4.0 * grad[k];
        gains[i][k] = (g > 0.0) != (update[i][k] > 0.0) ? gains[i][k] + 0.2 : gains[i][k] * 0.8;
        gains[i][k] = std::max(gains[i][k], 0.01);
        update[i][k] = momentum * update[i][k] - cfg.learning_rate * gains[i][k] * g;
      }
    }
    Point2 mean{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      y[i][0] += update[i][0];
      y[i][1] += update[i][1];
      mean[0] += y[i][0];
      mean[1] += y[i][1];
    }
    for (auto& pt : y) {
      pt[0] -= mean[0] / static_cast<double>(n);
      pt[1] -= mean[1] / static_cast<double>(n);
    }
    const int done = it + 1;
    if (done > cfg.exaggeration_iters && cfg.kl_every > 0 && (done - cfg.exaggeration_iters) % cfg.kl_every == 0) {
      result.kl_history.emplace_back(done, kl_divergence(p, num, compute_q()));
    }
  }
  result.kl = kl_divergence(p, num, compute_q());
  for (const auto& pt : y) {
    if (!std::isfinite(pt[0]) || !std::isfinite(pt[1])) {
      throw Error(ErrorKind::NumericalFailure, "t-SNE produced non-finite coordinates");
    }
  }
  result.coords = std::move(y);
  return result;
}

double silhouette(const std::vector<Point2>& points, const std::vector<int>& labels) {
  if (points.size() != labels.size()) throw Error(ErrorKind::InvalidArgument, "silhouette: label count mismatch");
  const auto n = points.size();
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) throw Error(ErrorKind::SingleClass, "silhouette needs at least two clusters");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[labels[i]] == 1) continue;
    std::map<int, double> sum;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      sum[labels[j]] += std::hypot(points[i][0] - points[j][0], points[i][1] - points[j][1]);
    }
    const double a = sum[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, s] : sum) {
      if (l != labels[i]) b = std::min(b, s / static_cast<double>(sizes[l]));
    }
    const double m = std::max(a, b);
    total += m == 0.0 ? 0.0 : (b - a) / m;
  }
  return total / static_cast<double>(n);
}

OverlapReport overlap_report(const std::vector<Group>& groups, std::size_t k) {
  if (groups.size() < 2) throw Error(ErrorKind::InvalidArgument, "overlap report needs at least two groups");
  std::vector<Point2> pts;
  std::vector<std::size_t> owner;
  std::size_t smallest = std::numeric_limits<std::size_t>::max();
  OverlapReport r;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].points.empty()) throw Error(ErrorKind::InvalidArgument, "group " + groups[g].name + " is empty");
    smallest = std::min(smallest, groups[g].points.size());
    Point2 c{0.0, 0.0};
    for (const auto& p : groups[g].points) {
      pts.push_back(p);
      owner.push_back(g);
      c[0] += p[0];
      c[1] += p[1];
    }
    const double m = static_cast<double>(groups[g].points.size());
    r.centroids.push_back({c[0] / m, c[1] / m});
  }
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = a + 1; b < groups.size(); ++b) {
      r.centroid_distance[{groups[a].name, groups[b].name}] =
          std::hypot(r.centroids[a][0] - r.centroids[b][0], r.centroids[a][1] - r.centroids[b][1]);
    }
  }
  r.k = std::min({k, smallest, pts.size() - 1});
  if (r.k != k) spdlog::warn("overlap report: k clamped from {} to {}", k, r.k);
  if (r.k == 0) throw Error(ErrorKind::InvalidArgument, "overlap report: k must be positive");

  std::vector<double> group_sum(groups.size(), 0.0);
  double overall = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    idx.resize(pts.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::vector<double> dist(pts.size());
    for (std::size_t j = 0; j < pts.size(); ++j) dist[j] = std::hypot(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
    idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(i));
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    std::size_t foreign = 0;
    for (std::size_t m = 0; m < r.k; ++m) {
      if (owner[idx[m]] != owner[i]) ++foreign;
    }
    const double frac = static_cast<double>(foreign) / static_cast<double>(r.k);
    group_sum[owner[i]] += frac;
    overall += frac;
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    r.mixing[groups[g].name] = group_sum[g] / static_cast<double>(groups[g].points.size());
  }
  r.overall_mixing = overall / static_cast<double>(pts.size());
  return r;
}

}  // namespace cogscreen::textsim
