#pragma once

// Sentence-embedding providers, the embedding cache file, and per-node
// feature assembly.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wice/dom_graph.hpp"
#include "wice/error.hpp"
#include "wice/rng.hpp"
#include "wice/tag_groups.hpp"
#include "wice/text.hpp"

namespace wice {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kUnitNormTolerance = 1e-6;

/// Renormalizes vectors whose norm drifted outside 1 +- 1e-6. Zero or
/// non-finite vectors are rejected.
inline void ingest_unit_norm(Vector& v) {
  if (!v.allFinite()) throw Error(ErrorCode::BadFormat, "non-finite embedding entry");
  const double norm = v.norm();
  if (norm == 0.0) throw Error(ErrorCode::ZeroVector, "zero embedding vector");
  if (std::abs(norm - 1.0) > kUnitNormTolerance) v /= norm;
}

namespace detail {

inline char32_t fold_case(char32_t c) {
  if (c >= U'A' && c <= U'Z') return c + 32;
  if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
  return c;
}

}  // namespace detail

/// Character 3-5-gram counts pushed through a seeded +-1 random projection,
/// then L2-normalized. Each n-gram owns a pseudo-random sign pattern derived
/// from its bytes and the seed, so the projection never has to be stored.
inline Vector hashed_featurizer(std::string_view utf8, std::size_t dim, std::uint64_t seed) {
  if (dim < 16) throw Error(ErrorCode::InvalidArgument, "hashed featurizer needs dim >= 16");
  if (utf8.empty()) throw Error(ErrorCode::EmptyText, "cannot embed empty text");
  std::u32string cps = U" ";
  for (char32_t c : text::decode_utf8(utf8)) cps.push_back(detail::fold_case(c));
  cps.push_back(U' ');

  Vector v = Vector::Zero(static_cast<Eigen::Index>(dim));
  const std::uint64_t seed_mix = mix64(seed ^ 0x5eedf00dULL);
  const std::size_t blocks = (dim + 63) / 64;
  std::string gram;
  for (std::size_t n = 3; n <= 5; ++n) {
    if (cps.size() < n) continue;
    for (std::size_t start = 0; start + n <= cps.size(); ++start) {
      gram.clear();
      for (std::size_t k = 0; k < n; ++k) text::append_utf8(gram, cps[start + k]);
      const std::uint64_t h = text::fnv1a64(gram) ^ seed_mix;
      for (std::size_t b = 0; b < blocks; ++b) {
        const std::uint64_t bits = mix64(h + 0x9e3779b97f4a7c15ULL * (b + 1));
        const std::size_t lo = b * 64;
        const std::size_t hi = std::min(dim, lo + 64);
        for (std::size_t j = lo; j < hi; ++j) {
          v[static_cast<Eigen::Index>(j)] += ((bits >> (j - lo)) & 1U) ? 1.0 : -1.0;
        }
      }
    }
  }
  const double norm = v.norm();
  if (norm == 0.0) throw Error(ErrorCode::ZeroVector, "hashed projection vanished");
  v /= norm;
  return v;
}

// --------------------------------------------------------------------------
// Embedding cache file
//
//   dim=<D> provider=<id>
//   <sha256 hex of text>\t<D space-separated decimals>
//   ...
//
// Records are written sorted by key; decimals use the shortest round-trip
// representation, so a write/read cycle is bit-exact.

class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  EmbeddingCache(std::size_t dim, std::string provider_id)
      : dim_(dim), provider_id_(std::move(provider_id)) {}

  std::size_t dim() const { return dim_; }
  const std::string& provider_id() const { return provider_id_; }
  std::size_t size() const { return vectors_.size(); }

  static std::string key_for(std::string_view text) { return text::sha256_hex(text); }

  void put_text(std::string_view text, Vector v) { put_key(key_for(text), std::move(v)); }

  void put_key(std::string key, Vector v) {
    if (static_cast<std::size_t>(v.size()) != dim_) {
      throw Error(ErrorCode::DimensionMismatch,
                  "vector of size " + std::to_string(v.size()) + " in cache of dim " +
                      std::to_string(dim_));
    }
    ingest_unit_norm(v);
    vectors_[std::move(key)] = std::move(v);
  }

  const Vector* find_text(std::string_view text) const { return find_key(key_for(text)); }

  const Vector* find_key(const std::string& key) const {
    const auto it = vectors_.find(key);
    return it == vectors_.end() ? nullptr : &it->second;
  }

  const std::map<std::string, Vector>& entries() const { return vectors_; }

  void write(std::ostream& out) const {
    out << "dim=" << dim_ << " provider=" << provider_id_ << "\n";
    for (const auto& [key, v] : vectors_) {
      out << key << '\t';
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) out << ' ';
        out << text::format_double(v[i]);
      }
      out << '\n';
    }
  }

  std::string to_string() const {
    std::ostringstream ss;
    write(ss);
    return ss.str();
  }

  static EmbeddingCache read(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::BadFormat, "empty embedding cache");
    const auto fields = text::split(text::trim(line), ' ');
    if (fields.size() != 2 || !fields[0].starts_with("dim=") ||
        !fields[1].starts_with("provider=")) {
      throw Error(ErrorCode::BadFormat, "bad cache header '" + line + "'");
    }
    const auto dim = text::parse_int<std::size_t>(fields[0].substr(4));
    if (dim == 0) throw Error(ErrorCode::BadFormat, "cache dim must be positive");
    EmbeddingCache cache(dim, std::string(fields[1].substr(9)));
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw Error(ErrorCode::BadFormat, "cache line " + std::to_string(line_no) + " has no tab");
      }
      const auto values = text::split(std::string_view(line).substr(tab + 1), ' ');
      if (values.size() != dim) {
        throw Error(ErrorCode::DimensionMismatch,
                    "cache line " + std::to_string(line_no) + " has " +
                        std::to_string(values.size()) + " values");
      }
      Vector v(static_cast<Eigen::Index>(dim));
      for (std::size_t i = 0; i < dim; ++i) v[static_cast<Eigen::Index>(i)] = text::parse_double(values[i]);
      cache.put_key(line.substr(0, tab), std::move(v));
    }
    return cache;
  }

  static EmbeddingCache load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingPrerequisite, "embedding cache " + path);
    return read(in);
  }

 private:
  std::size_t dim_ = 0;
  std::string provider_id_;
  std::map<std::string, Vector> vectors_;
};

// --------------------------------------------------------------------------
// Providers

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual std::size_t dim() const = 0;
  /// Unit-norm vector for `text`; identical strings give identical vectors.
  virtual Vector embed(std::string_view text) const = 0;
};

class HashedProvider final : public EmbeddingProvider {
 public:
  HashedProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim < 16) throw Error(ErrorCode::InvalidArgument, "hashed provider needs dim >= 16");
  }

  static std::string make_id(std::uint64_t seed) { return "hashed-seed" + std::to_string(seed); }

  std::string id() const override { return make_id(seed_); }
  std::size_t dim() const override { return dim_; }
  Vector embed(std::string_view text) const override {
    return hashed_featurizer(text, dim_, seed_);
  }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

class CacheProvider final : public EmbeddingProvider {
 public:
  explicit CacheProvider(std::shared_ptr<const EmbeddingCache> cache) : cache_(std::move(cache)) {}

  std::string id() const override { return cache_->provider_id(); }
  std::size_t dim() const override { return cache_->dim(); }
  Vector embed(std::string_view text) const override {
    if (text.empty()) throw Error(ErrorCode::EmptyText, "cannot embed empty text");
    if (const auto* v = cache_->find_text(text)) return *v;
    throw Error(ErrorCode::MissingEmbedding, "no cached vector for text '" +
                                                 std::string(text.substr(0, 60)) + "'");
  }

 private:
  std::shared_ptr<const EmbeddingCache> cache_;
};

inline std::vector<Vector> embed_texts(const std::vector<std::string>& texts,
                                       const EmbeddingProvider& provider) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(provider.embed(t));
  return out;
}

// --------------------------------------------------------------------------
// Per-graph embeddings and features

struct EmbeddingMatrix {
  std::size_t dim = 0;
  std::map<int, Vector> node_vectors;  // text nodes only
  Vector reference_vector;
  std::optional<Vector> title_vector;
  std::string provider_id;
};

/// Embeds every text node, the reference text (when present) and the title.
/// MissingEmbedding errors name the page.
inline EmbeddingMatrix embed_graph(const DomGraph& graph, const EmbeddingProvider& provider) {
  EmbeddingMatrix emb;
  emb.dim = provider.dim();
  emb.provider_id = provider.id();
  try {
    for (const auto& n : graph.nodes) {
      if (n.is_text()) emb.node_vectors.emplace(n.node_id, provider.embed(*n.text));
    }
    if (!graph.reference_text.empty()) emb.reference_vector = provider.embed(graph.reference_text);
    if (graph.title) emb.title_vector = provider.embed(*graph.title);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::MissingEmbedding) {
      throw Error(ErrorCode::MissingEmbedding, "page " + graph.page_id + ": " + e.what());
    }
    throw;
  }
  return emb;
}

/// Rows in node-id order: [one-hot tag group (22) | embedding (dim, zero for
/// non-text nodes) | main-image flag].
struct FeatureTensor {
  Matrix rows;

  static constexpr Eigen::Index kEmbeddingOffset = kTagGroupCount;
  static Eigen::Index width_for(std::size_t dim) {
    return kTagGroupCount + static_cast<Eigen::Index>(dim) + 1;
  }
};

inline FeatureTensor assemble_features(const DomGraph& graph, const EmbeddingMatrix& emb,
                                       std::size_t configured_dim) {
  if (emb.dim != configured_dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "embedding dim " + std::to_string(emb.dim) + " != configured " +
                    std::to_string(configured_dim));
  }
  const auto n = static_cast<Eigen::Index>(graph.nodes.size());
  const auto d = static_cast<Eigen::Index>(emb.dim);
  FeatureTensor t;
  t.rows = Matrix::Zero(n, FeatureTensor::width_for(emb.dim));
  for (const auto& node : graph.nodes) {
    const auto r = static_cast<Eigen::Index>(node.node_id);
    t.rows(r, node.tag_group) = 1.0;
    if (node.is_text()) {
      const auto it = emb.node_vectors.find(node.node_id);
      if (it == emb.node_vectors.end()) {
        throw Error(ErrorCode::MissingEmbedding,
                    "page " + graph.page_id + " node " + std::to_string(node.node_id));
      }
      if (it->second.size() != d) {
        throw Error(ErrorCode::DimensionMismatch, "node vector has wrong size");
      }
      t.rows.block(r, FeatureTensor::kEmbeddingOffset, 1, d) = it->second.transpose();
    }
    if (node.is_main_image) t.rows(r, FeatureTensor::kEmbeddingOffset + d) = 1.0;
  }
  return t;
}

/// Memoizing wrapper: the same text is embedded once per process.
class MemoProvider final : public EmbeddingProvider {
 public:
  explicit MemoProvider(const EmbeddingProvider& inner) : inner_(inner) {}
  std::string id() const override { return inner_.id(); }
  std::size_t dim() const override { return inner_.dim(); }
  Vector embed(std::string_view text) const override {
    const std::string key(text);
    if (const auto it = memo_.find(key); it != memo_.end()) return it->second;
    Vector v = inner_.embed(text);
    memo_.emplace(key, v);
    return v;
  }

 private:
  const EmbeddingProvider& inner_;
  mutable std::unordered_map<std::string, Vector> memo_;
};

}  // namespace wice
