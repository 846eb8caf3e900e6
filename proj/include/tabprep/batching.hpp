#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tabprep/core.hpp"
#include "tabprep/embed.hpp"
#include "tabprep/kmeans.hpp"

namespace tabprep {

enum class BatchMode { Random, Cluster };

inline const char* batch_mode_name(BatchMode m) {
  return m == BatchMode::Random ? "random" : "cluster";
}

inline BatchMode parse_batch_mode(std::string_view s) {
  if (s == "random") return BatchMode::Random;
  if (s == "cluster") return BatchMode::Cluster;
  raise(Errc::ConfigError, "unknown batch mode '" + std::string(s) + "' (expected random|cluster)");
}

/// An ordered partition of instance ids into prompt-sized batches,
/// reproducible from (mode, seed, batch_size) plus the inputs.
struct BatchPlan {
  std::vector<std::vector<std::string>> batches;
  BatchMode mode = BatchMode::Random;
  std::uint64_t seed = 0;
  std::size_t batch_size = 1;

  std::size_t instance_count() const {
    std::size_t n = 0;
    for (const auto& b : batches) n += b.size();
    return n;
  }
};

namespace detail {

// Fisher-Yates with explicit modulo draws so the permutation depends only on
// the engine's output sequence, not on library distribution internals.
inline void deterministic_shuffle(std::vector<std::string>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i)
    std::swap(items[i - 1], items[rng() % i]);
}

inline void append_chunks(BatchPlan& plan, std::vector<std::string> ids, std::size_t batch_size) {
  for (std::size_t start = 0; start < ids.size(); start += batch_size) {
    std::size_t end = std::min(start + batch_size, ids.size());
    plan.batches.emplace_back(ids.begin() + start, ids.begin() + end);
  }
}

}  // namespace detail

/// Shuffles ids with PRNG(seed) and chunks the result into consecutive
/// batches of batch_size (the final batch may be smaller).
inline BatchPlan plan_random(std::vector<std::string> ids, std::size_t batch_size,
                             std::uint64_t seed) {
  if (batch_size == 0) raise(Errc::ConfigError, "batch size must be >= 1");
  if (ids.empty()) raise(Errc::ConfigError, "cannot plan batches for an empty dataset");
  BatchPlan plan;
  plan.mode = BatchMode::Random;
  plan.seed = seed;
  plan.batch_size = batch_size;
  std::mt19937_64 rng(seed);
  detail::deterministic_shuffle(ids, rng);
  detail::append_chunks(plan, std::move(ids), batch_size);
  return plan;
}

/// Default cluster count: one cluster per ~4 batches, clamped to [1, N].
inline std::size_t default_cluster_count(std::size_t n, std::size_t batch_size) {
  std::size_t k = (n + 4 * batch_size - 1) / (4 * batch_size);
  return std::max<std::size_t>(1, std::min(k, n));
}

/// Clusters instances by embedding, then random-batches within each cluster
/// using seed XOR cluster index. Cluster batch groups are concatenated in
/// ascending cluster index; no batch mixes clusters.
inline BatchPlan plan_cluster(const std::vector<std::string>& ids,
                              const std::vector<EmbeddingVector>& vectors,
                              std::size_t batch_size, std::size_t k, std::uint64_t seed) {
  if (batch_size == 0) raise(Errc::ConfigError, "batch size must be >= 1");
  if (ids.empty()) raise(Errc::ConfigError, "cannot plan batches for an empty dataset");
  if (ids.size() != vectors.size())
    raise(Errc::ConfigError, "cluster planning needs one embedding per instance");

  KMeansResult clusters = kmeans(vectors, k, seed);
  BatchPlan plan;
  plan.mode = BatchMode::Cluster;
  plan.seed = seed;
  plan.batch_size = batch_size;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::string> members;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (clusters.assignments[i] == c) members.push_back(ids[i]);
    if (members.empty()) continue;
    std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(c));
    detail::deterministic_shuffle(members, rng);
    detail::append_chunks(plan, std::move(members), batch_size);
  }
  return plan;
}

}  // namespace tabprep
