#pragma once

#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "tabprep/core.hpp"
#include "tabprep/embed.hpp"

namespace tabprep {

/// Embedder backed by an HTTP endpoint speaking {"texts": [...]} in and
/// {"vectors": [[...]]} out. Lets cluster batching use a real sentence
/// embedding model while the default stays offline.
class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(std::string base_url, std::size_t dimension, std::string path = "/embed")
      : base_url_(std::move(base_url)), path_(std::move(path)), dim_(dimension) {
    if (dim_ == 0) raise(Errc::ConfigError, "embedder dimension must be positive");
  }

  std::size_t dimension() const override { return dim_; }

  EmbeddingVector embed(std::string_view text) override {
    return embed_many({std::string(text)}).front();
  }

  std::vector<EmbeddingVector> embed_many(const std::vector<std::string>& texts) {
    httplib::Client client(base_url_);
    nlohmann::ordered_json body;
    body["texts"] = texts;
    httplib::Result result = client.Post(path_, body.dump(), "application/json");
    if (!result || result->status != 200)
      raise(Errc::EmbedderUnavailable,
            "embedding endpoint " + base_url_ + path_ + " unavailable" +
                (result ? " (HTTP " + std::to_string(result->status) + ")" : ""),
            /*retriable=*/true);
    nlohmann::ordered_json parsed = nlohmann::ordered_json::parse(result->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("vectors") || !parsed["vectors"].is_array() ||
        parsed["vectors"].size() != texts.size())
      raise(Errc::EmbedderUnavailable, "embedding endpoint returned a malformed response");

    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& row : parsed["vectors"]) {
      EmbeddingVector v;
      if (!row.is_array())
        raise(Errc::EmbedderUnavailable, "embedding endpoint returned a malformed vector");
      for (const auto& x : row) v.values.push_back(x.get<double>());
      if (v.dimension() != dim_)
        raise(Errc::DimensionMismatch,
              "embedding endpoint returned dimension " + std::to_string(v.dimension()) +
                  ", configured " + std::to_string(dim_));
      out.push_back(std::move(v));
    }
    return out;
  }

 private:
  std::string base_url_;
  std::string path_;
  std::size_t dim_;
};

}  // namespace tabprep
