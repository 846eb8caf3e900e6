#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tabprep/contextualize.hpp"
#include "tabprep/core.hpp"

namespace tabprep {

struct EmbeddingVector {
  std::vector<double> values;
  std::size_t dimension() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

/// Maps serialized instance text to a fixed-dimension vector. Implementations
/// must be deterministic per input text within one run.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dimension() const = 0;
  virtual EmbeddingVector embed(std::string_view text) = 0;
};

/// Offline default: hashed bag of tokens. Tokens are maximal runs of ASCII
/// alphanumerics or bytes >= 0x80; ASCII letters are lowercased; each token
/// hashes (FNV-1a 64) to one of `dimension` buckets; bucket counts are then
/// L2-normalized. Token order never affects the result.
class HashedBagEmbedder final : public Embedder {
 public:
  explicit HashedBagEmbedder(std::size_t dimension = 256) : dim_(dimension) {
    if (dim_ == 0) raise(Errc::ConfigError, "embedder dimension must be positive");
  }

  std::size_t dimension() const override { return dim_; }

  EmbeddingVector embed(std::string_view text) override {
    EmbeddingVector vec;
    vec.values.assign(dim_, 0.0);
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      vec.values[fnv1a64(token) % dim_] += 1.0;
      token.clear();
    };
    for (unsigned char c : text) {
      if (c >= 0x80 || std::isalnum(c)) {
        token += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
      } else {
        flush();
      }
    }
    flush();
    double norm_sq = 0.0;
    for (double v : vec.values) norm_sq += v * v;
    if (norm_sq > 0.0) {
      double inv = 1.0 / std::sqrt(norm_sq);
      for (double& v : vec.values) v *= inv;
    }
    return vec;
  }

 private:
  std::size_t dim_;
};

inline EmbeddingVector embed_instance(const DataInstance& inst, const Task& task,
                                      Embedder& embedder) {
  return embedder.embed(embedding_text(inst, task));
}

}  // namespace tabprep
