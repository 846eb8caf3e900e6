#pragma once

#include <cassert>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "tabprep/core.hpp"
#include "tabprep/embed.hpp"

namespace tabprep {

struct KMeansResult {
  std::vector<std::size_t> assignments;
  std::vector<EmbeddingVector> centroids;
  double sse = 0.0;
  // SSE after each completed iteration; non-increasing up to rounding.
  std::vector<double> sse_history;
  std::size_t iterations = 0;
};

namespace detail {

inline double squared_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    double d = a.values[i] - b.values[i];
    acc += d * d;
  }
  return acc;
}

// Uniform draw in [0, 1) with 53 random bits; identical across platforms for
// a given engine state, unlike std::uniform_real_distribution.
inline double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// k-means++ seeding: first centroid uniform, each next one drawn with
// probability proportional to squared distance from the chosen set.
inline std::vector<EmbeddingVector> seed_centroids(const std::vector<EmbeddingVector>& points,
                                                   std::size_t k, std::mt19937_64& rng) {
  std::vector<EmbeddingVector> centroids;
  centroids.reserve(k);
  centroids.push_back(points[rng() % points.size()]);
  std::vector<double> best(points.size());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double d = squared_distance(points[i], centroids[0]);
      for (std::size_t c = 1; c < centroids.size(); ++c)
        d = std::min(d, squared_distance(points[i], centroids[c]));
      best[i] = d;
      total += d;
    }
    std::size_t pick = rng() % points.size();
    if (total > 0.0) {
      double target = unit_draw(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        acc += best[i];
        if (target < acc) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(points[pick]);
  }
  return centroids;
}

inline std::size_t nearest_centroid(const EmbeddingVector& p,
                                    const std::vector<EmbeddingVector>& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

}  // namespace detail

/// Lloyd's algorithm with k-means++ seeding from PRNG(seed). Points join
/// their nearest centroid by Euclidean distance, ties resolved to the lowest
/// centroid index. An emptied cluster is reseeded with the point currently
/// farthest from its assigned centroid. Stops when every centroid moves less
/// than tol (squared movement) or after max_iters iterations.
inline KMeansResult kmeans(const std::vector<EmbeddingVector>& points, std::size_t k,
                           std::uint64_t seed, std::size_t max_iters = 100, double tol = 1e-12) {
  if (k == 0) raise(Errc::ConfigError, "k-means needs k >= 1");
  if (k > points.size())
    raise(Errc::ConfigError, "k-means needs k <= point count, got k=" + std::to_string(k) +
                                 " for " + std::to_string(points.size()) + " points");
  const std::size_t dim = points[0].dimension();
  for (const auto& p : points)
    if (p.dimension() != dim)
      raise(Errc::DimensionMismatch, "embedding dimensions differ: " + std::to_string(dim) +
                                         " vs " + std::to_string(p.dimension()));

  std::mt19937_64 rng(seed);
  KMeansResult res;
  res.centroids = detail::seed_centroids(points, k, rng);
  res.assignments.assign(points.size(), 0);

  double prev_sse = std::numeric_limits<double>::infinity();
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    for (std::size_t i = 0; i < points.size(); ++i)
      res.assignments[i] = detail::nearest_centroid(points[i], res.centroids);

    // Reseed empty clusters before computing means so every mean is defined.
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t a : res.assignments) ++sizes[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) continue;
      std::size_t farthest = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (sizes[res.assignments[i]] <= 1) continue;
        double d = detail::squared_distance(points[i], res.centroids[res.assignments[i]]);
        if (d > far_d) {
          far_d = d;
          farthest = i;
        }
      }
      if (far_d < 0.0) continue;
      --sizes[res.assignments[farthest]];
      res.assignments[farthest] = c;
      ++sizes[c];
      res.centroids[c] = points[farthest];
    }

    std::vector<EmbeddingVector> means(k);
    for (auto& m : means) m.values.assign(dim, 0.0);
    for (std::size_t i = 0; i < points.size(); ++i)
      for (std::size_t d = 0; d < dim; ++d)
        means[res.assignments[i]].values[d] += points[i].values[d];
    double max_move = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) {
        means[c] = res.centroids[c];
        continue;
      }
      for (double& v : means[c].values) v /= static_cast<double>(sizes[c]);
      max_move = std::max(max_move, detail::squared_distance(means[c], res.centroids[c]));
    }
    res.centroids = std::move(means);

    res.sse = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
      res.sse += detail::squared_distance(points[i], res.centroids[res.assignments[i]]);
    res.sse_history.push_back(res.sse);
    res.iterations = iter + 1;
    assert(res.sse <= prev_sse + 1e-9 * std::max(1.0, prev_sse));
    prev_sse = res.sse;

    if (max_move < tol) break;
  }

  // Final assignment pass so assignments and centroids agree on exit.
  for (std::size_t i = 0; i < points.size(); ++i)
    res.assignments[i] = detail::nearest_centroid(points[i], res.centroids);
  res.sse = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    res.sse += detail::squared_distance(points[i], res.centroids[res.assignments[i]]);
  return res;
}

}  // namespace tabprep
