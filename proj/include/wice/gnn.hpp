#pragma once

// Graph layers (GCN, GAT, DeeperGCN residual blocks), the weight-producing
// wGCN readout, the cosine proxy loss, and reverse-mode gradients written as
// per-layer adjoints.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wice/dom_graph.hpp"
#include "wice/error.hpp"
#include "wice/featurize.hpp"
#include "wice/rng.hpp"

namespace wice::gnn {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

inline constexpr double kEpsilon = 1e-12;
inline constexpr double kLeakySlope = 0.2;
inline constexpr double kLayerNormEpsilon = 1e-5;

enum class Architecture { WGCN, GCN, GAT, DGCN };
enum class Readout { ImageNode, MeanPool };
enum class WeightMode { Softmax, Raw };
enum class Activation { Identity, ReLU, ELU };

inline std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::WGCN: return "wgcn";
    case Architecture::GCN: return "gcn";
    case Architecture::GAT: return "gat";
    case Architecture::DGCN: return "dgcn";
  }
  return "wgcn";
}

inline Architecture architecture_from_string(std::string_view s) {
  if (s == "wgcn") return Architecture::WGCN;
  if (s == "gcn") return Architecture::GCN;
  if (s == "gat") return Architecture::GAT;
  if (s == "dgcn") return Architecture::DGCN;
  throw Error(ErrorCode::InvalidArgument, "unknown architecture '" + std::string(s) + "'");
}

// --------------------------------------------------------------------------
// Graph input

/// Everything a forward pass needs about one page, precomputed once.
struct GraphInput {
  Matrix features;              // n x (23 + dim)
  SparseMatrix adjacency;       // normalized, with self loops
  std::vector<std::vector<int>> neighbors;  // incl. self, sorted
  Matrix embeddings;            // n x dim, zero rows for non-text nodes
  std::vector<char> text_mask;  // 1 for text nodes
  int image_node = 0;

  Eigen::Index size() const { return features.rows(); }
  std::size_t text_count() const {
    return static_cast<std::size_t>(std::count(text_mask.begin(), text_mask.end(), 1));
  }
};

/// D^-1/2 (A + I) D^-1/2 over the undirected tree edges.
inline SparseMatrix normalized_adjacency(std::size_t n,
                                         const std::vector<std::pair<int, int>>& edges) {
  std::vector<double> degree(n, 1.0);
  for (const auto& [p, c] : edges) {
    degree[static_cast<std::size_t>(p)] += 1.0;
    degree[static_cast<std::size_t>(c)] += 1.0;
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(n + 2 * edges.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    trips.emplace_back(k, k, 1.0 / degree[i]);
  }
  for (const auto& [p, c] : edges) {
    const double v = 1.0 / std::sqrt(degree[static_cast<std::size_t>(p)] *
                                     degree[static_cast<std::size_t>(c)]);
    trips.emplace_back(p, c, v);
    trips.emplace_back(c, p, v);
  }
  SparseMatrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

inline SparseMatrix normalized_adjacency(const DomGraph& g) {
  return normalized_adjacency(g.nodes.size(), g.edges);
}

inline std::vector<std::vector<int>> neighbors_with_self(
    std::size_t n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<int>> nb(n);
  for (std::size_t i = 0; i < n; ++i) nb[i].push_back(static_cast<int>(i));
  for (const auto& [p, c] : edges) {
    nb[static_cast<std::size_t>(p)].push_back(c);
    nb[static_cast<std::size_t>(c)].push_back(p);
  }
  for (auto& v : nb) std::sort(v.begin(), v.end());
  return nb;
}

inline GraphInput make_input(const DomGraph& graph, const FeatureTensor& features,
                             const EmbeddingMatrix& emb) {
  GraphInput in;
  const auto n = graph.nodes.size();
  in.features = features.rows;
  in.adjacency = normalized_adjacency(graph);
  in.neighbors = neighbors_with_self(n, graph.edges);
  in.embeddings = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(emb.dim));
  in.text_mask.assign(n, 0);
  for (const auto& [id, v] : emb.node_vectors) {
    in.embeddings.row(id) = v.transpose();
    in.text_mask[static_cast<std::size_t>(id)] = 1;
  }
  in.image_node = graph.image_node();
  return in;
}

// --------------------------------------------------------------------------
// Activations

inline Matrix activate(const Matrix& x, Activation act) {
  switch (act) {
    case Activation::Identity: return x;
    case Activation::ReLU: return x.cwiseMax(0.0);
    case Activation::ELU:
      return x.unaryExpr([](double v) { return v > 0 ? v : std::expm1(v); });
  }
  return x;
}

/// d act / d pre, evaluated at the pre-activation.
inline Matrix activation_grad(const Matrix& pre, Activation act) {
  switch (act) {
    case Activation::Identity: return Matrix::Ones(pre.rows(), pre.cols());
    case Activation::ReLU:
      return pre.unaryExpr([](double v) { return v > 0 ? 1.0 : 0.0; });
    case Activation::ELU:
      return pre.unaryExpr([](double v) { return v > 0 ? 1.0 : std::exp(v); });
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

// --------------------------------------------------------------------------
// GCN layer: act(A H W + b)

struct GcnCache {
  Matrix aggregated;  // A H
  Matrix pre;         // A H W + b
};

inline void check_shapes(const Matrix& h, const Matrix& w, const RowVector& b) {
  if (h.cols() != w.rows() || w.cols() != b.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                "features " + std::to_string(h.cols()) + ", weight " +
                    std::to_string(w.rows()) + "x" + std::to_string(w.cols()) + ", bias " +
                    std::to_string(b.cols()));
  }
}

inline Matrix gcn_layer(const Matrix& h, const SparseMatrix& a, const Matrix& w,
                        const RowVector& b, Activation act, GcnCache* cache = nullptr) {
  check_shapes(h, w, b);
  if (a.rows() != h.rows()) throw Error(ErrorCode::DimensionMismatch, "adjacency size");
  Matrix agg = a * h;
  Matrix pre = agg * w;
  pre.rowwise() += b;
  Matrix out = activate(pre, act);
  if (cache) {
    cache->aggregated = std::move(agg);
    cache->pre = std::move(pre);
  }
  return out;
}

struct LayerGrads {
  Matrix d_input;
  Matrix d_weight;
  RowVector d_bias;
};

inline LayerGrads gcn_layer_backward(const Matrix& d_out, const SparseMatrix& a, const Matrix& w,
                                     Activation act, const GcnCache& cache) {
  const Matrix d_pre = d_out.cwiseProduct(activation_grad(cache.pre, act));
  LayerGrads g;
  g.d_weight = cache.aggregated.transpose() * d_pre;
  g.d_bias = d_pre.colwise().sum();
  // A is symmetric.
  g.d_input = a * (d_pre * w.transpose());
  return g;
}

// --------------------------------------------------------------------------
// GAT layer

struct GatHeadParams {
  const Matrix* weight;  // in x out
  const Matrix* att_src;  // out x 1
  const Matrix* att_dst;  // out x 1
};

struct GatHeadCache {
  Matrix transformed;                        // H W
  std::vector<std::vector<double>> scores;   // pre-LeakyReLU, aligned with neighbors
  std::vector<std::vector<double>> alpha;    // attention, aligned with neighbors
};

struct GatCache {
  std::vector<GatHeadCache> heads;
  Matrix pre;  // combined output before activation
};

/// Multi-head graph attention. Hidden layers concatenate heads and apply
/// ELU; the final layer averages heads with identity activation. Returns
/// the layer output; attention coefficients are kept in `cache`.
inline Matrix gat_layer(const Matrix& h, const std::vector<std::vector<int>>& neighbors,
                        const std::vector<GatHeadParams>& heads, const RowVector& bias,
                        bool concat, GatCache& cache) {
  const auto n = h.rows();
  if (static_cast<Eigen::Index>(neighbors.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch, "neighbor list size");
  }
  const auto out_dim = heads.front().weight->cols();
  const auto k = static_cast<Eigen::Index>(heads.size());
  const Eigen::Index total = concat ? out_dim * k : out_dim;
  if (bias.cols() != total) throw Error(ErrorCode::DimensionMismatch, "GAT bias size");
  Matrix combined = Matrix::Zero(n, total);
  cache.heads.assign(heads.size(), {});
  for (std::size_t hd = 0; hd < heads.size(); ++hd) {
    const auto& p = heads[hd];
    if (p.weight->rows() != h.cols()) throw Error(ErrorCode::DimensionMismatch, "GAT weight rows");
    auto& hc = cache.heads[hd];
    hc.transformed = h * *p.weight;
    const Vector fs = hc.transformed * *p.att_src;
    const Vector fd = hc.transformed * *p.att_dst;
    hc.scores.resize(static_cast<std::size_t>(n));
    hc.alpha.resize(static_cast<std::size_t>(n));
    Matrix head_out = Matrix::Zero(n, out_dim);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& nb = neighbors[static_cast<std::size_t>(i)];
      auto& s = hc.scores[static_cast<std::size_t>(i)];
      auto& al = hc.alpha[static_cast<std::size_t>(i)];
      s.resize(nb.size());
      al.resize(nb.size());
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < nb.size(); ++t) {
        s[t] = fs[i] + fd[nb[t]];
        const double e = s[t] > 0 ? s[t] : kLeakySlope * s[t];
        al[t] = e;
        mx = std::max(mx, e);
      }
      double sum = 0.0;
      for (double& v : al) {
        v = std::exp(v - mx);
        sum += v;
      }
      for (std::size_t t = 0; t < nb.size(); ++t) {
        al[t] /= std::max(sum, kEpsilon);
        head_out.row(i) += al[t] * hc.transformed.row(nb[t]);
      }
    }
    if (concat) {
      combined.middleCols(static_cast<Eigen::Index>(hd) * out_dim, out_dim) = head_out;
    } else {
      combined += head_out / static_cast<double>(k);
    }
  }
  combined.rowwise() += bias;
  cache.pre = combined;
  return concat ? activate(combined, Activation::ELU) : combined;
}

struct GatHeadGrads {
  Matrix d_weight;
  Matrix d_att_src;
  Matrix d_att_dst;
};

struct GatGrads {
  Matrix d_input;
  std::vector<GatHeadGrads> heads;
  RowVector d_bias;
};

inline GatGrads gat_layer_backward(const Matrix& d_out, const Matrix& h,
                                   const std::vector<std::vector<int>>& neighbors,
                                   const std::vector<GatHeadParams>& heads, bool concat,
                                   const GatCache& cache) {
  const auto n = h.rows();
  const auto out_dim = heads.front().weight->cols();
  const auto k = static_cast<double>(heads.size());
  Matrix d_pre = concat ? Matrix(d_out.cwiseProduct(activation_grad(cache.pre, Activation::ELU)))
                        : d_out;
  GatGrads g;
  g.d_bias = d_pre.colwise().sum();
  g.d_input = Matrix::Zero(n, h.cols());
  for (std::size_t hd = 0; hd < heads.size(); ++hd) {
    const auto& p = heads[hd];
    const auto& hc = cache.heads[hd];
    const Matrix d_head = concat
        ? Matrix(d_pre.middleCols(static_cast<Eigen::Index>(hd) * out_dim, out_dim))
        : Matrix(d_pre / k);
    Matrix d_transformed = Matrix::Zero(n, out_dim);
    Vector d_fs = Vector::Zero(n);
    Vector d_fd = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& nb = neighbors[static_cast<std::size_t>(i)];
      const auto& al = hc.alpha[static_cast<std::size_t>(i)];
      const auto& s = hc.scores[static_cast<std::size_t>(i)];
      std::vector<double> d_alpha(nb.size());
      double weighted = 0.0;
      for (std::size_t t = 0; t < nb.size(); ++t) {
        d_alpha[t] = d_head.row(i).dot(hc.transformed.row(nb[t]));
        d_transformed.row(nb[t]) += al[t] * d_head.row(i);
        weighted += al[t] * d_alpha[t];
      }
      for (std::size_t t = 0; t < nb.size(); ++t) {
        const double d_e = al[t] * (d_alpha[t] - weighted);
        const double d_s = d_e * (s[t] > 0 ? 1.0 : kLeakySlope);
        d_fs[i] += d_s;
        d_fd[nb[t]] += d_s;
      }
    }
    d_transformed += d_fs * p.att_src->transpose() + d_fd * p.att_dst->transpose();
    GatHeadGrads hg;
    hg.d_att_src = hc.transformed.transpose() * d_fs;
    hg.d_att_dst = hc.transformed.transpose() * d_fd;
    hg.d_weight = h.transpose() * d_transformed;
    g.d_input += d_transformed * p.weight->transpose();
    g.heads.push_back(std::move(hg));
  }
  return g;
}

// --------------------------------------------------------------------------
// DeeperGCN residual block: H + A ReLU(LayerNorm(H)) W + b

struct DgcnBlockParams {
  const Matrix* ln_gain;  // 1 x w
  const Matrix* ln_bias;  // 1 x w
  const Matrix* weight;   // w x w
  const Matrix* bias;     // 1 x w
};

struct DgcnCache {
  Matrix normalized;  // x_hat
  Vector inv_std;     // per row
  Matrix pre_relu;    // gain * x_hat + bias
  Matrix aggregated;  // A ReLU(...)
};

inline Matrix dgcn_block(const Matrix& h, const SparseMatrix& a, const DgcnBlockParams& p,
                         DgcnCache* cache = nullptr) {
  const auto w = h.cols();
  if (p.weight->rows() != w || p.weight->cols() != w || p.ln_gain->cols() != w) {
    throw Error(ErrorCode::DimensionMismatch, "DGCN block needs in_dim == out_dim");
  }
  const Vector mean = h.rowwise().mean();
  Matrix centered = h.colwise() - mean;
  const Vector var = centered.array().square().rowwise().mean();
  const Vector inv_std = (var.array() + kLayerNormEpsilon).rsqrt();
  Matrix x_hat = centered.array().colwise() * inv_std.array();
  Matrix pre = x_hat.array().rowwise() * p.ln_gain->row(0).array();
  pre.rowwise() += p.ln_bias->row(0);
  Matrix agg = a * pre.cwiseMax(0.0);
  Matrix out = agg * *p.weight;
  out.rowwise() += p.bias->row(0);
  out += h;
  if (cache) {
    cache->normalized = std::move(x_hat);
    cache->inv_std = inv_std;
    cache->pre_relu = std::move(pre);
    cache->aggregated = std::move(agg);
  }
  return out;
}

struct DgcnGrads {
  Matrix d_input;
  Matrix d_ln_gain;
  Matrix d_ln_bias;
  Matrix d_weight;
  Matrix d_bias;
};

inline DgcnGrads dgcn_block_backward(const Matrix& d_out, const SparseMatrix& a,
                                     const DgcnBlockParams& p, const DgcnCache& c) {
  DgcnGrads g;
  g.d_weight = c.aggregated.transpose() * d_out;
  g.d_bias = d_out.colwise().sum();
  const Matrix d_relu = a * (d_out * p.weight->transpose());
  const Matrix d_pre = d_relu.cwiseProduct(
      c.pre_relu.unaryExpr([](double v) { return v > 0 ? 1.0 : 0.0; }));
  g.d_ln_gain = d_pre.cwiseProduct(c.normalized).colwise().sum();
  g.d_ln_bias = d_pre.colwise().sum();
  const Matrix d_xhat = d_pre.array().rowwise() * p.ln_gain->row(0).array();
  const Vector mean_d = d_xhat.rowwise().mean();
  const Vector mean_dx = d_xhat.cwiseProduct(c.normalized).rowwise().mean();
  Matrix d_x = d_xhat.colwise() - mean_d;
  d_x -= (c.normalized.array().colwise() * mean_dx.array()).matrix();
  d_x = d_x.array().colwise() * c.inv_std.array();
  g.d_input = d_out + d_x;
  return g;
}

// --------------------------------------------------------------------------
// Cosine loss

/// 1 - cos(z_hat, z_star), in [0, 2].
inline double cosine_loss(const Vector& z_hat, const Vector& z_star) {
  if (z_hat.size() != z_star.size()) throw Error(ErrorCode::DimensionMismatch, "cosine_loss");
  const double nu = z_hat.norm();
  const double nv = z_star.norm();
  if (nu < kEpsilon || nv < kEpsilon) throw Error(ErrorCode::ZeroVector, "cosine_loss input");
  const double cos = z_hat.dot(z_star) / (nu * nv);
  return std::clamp(1.0 - cos, 0.0, 2.0);
}

inline double cosine_similarity(const Vector& u, const Vector& v) {
  const double denom = std::max(u.norm() * v.norm(), kEpsilon);
  return u.dot(v) / denom;
}

/// d(1 - cos(u, v)) / du.
inline Vector cosine_loss_grad(const Vector& z_hat, const Vector& z_star) {
  const double nu = z_hat.norm();
  const double nv = z_star.norm();
  if (nu < kEpsilon || nv < kEpsilon) throw Error(ErrorCode::ZeroVector, "cosine_loss input");
  const double cos = z_hat.dot(z_star) / (nu * nv);
  return -(z_star / (nu * nv) - cos * z_hat / (nu * nu));
}

// --------------------------------------------------------------------------
// Model parameters

struct ModelConfig {
  Architecture architecture = Architecture::WGCN;
  std::size_t input_dim = 0;      // feature width
  std::size_t embedding_dim = 0;  // output dim of plain models
  /// wGCN: hidden widths before the final width-1 layer.
  /// GCN: GCN layer widths. GAT: per-head width of each layer. DGCN: {width}.
  std::vector<std::size_t> hidden;
  std::size_t heads = 4;
  std::size_t depth = 8;
  Readout readout = Readout::ImageNode;
  WeightMode weight_mode = WeightMode::Softmax;
  std::uint64_t seed = 0;

  static ModelConfig defaults(Architecture arch, std::size_t embedding_dim, std::uint64_t seed) {
    ModelConfig c;
    c.architecture = arch;
    c.embedding_dim = embedding_dim;
    c.input_dim = static_cast<std::size_t>(FeatureTensor::width_for(embedding_dim));
    c.seed = seed;
    switch (arch) {
      case Architecture::WGCN: c.hidden = {256, 64}; break;
      case Architecture::GCN: c.hidden = {256, 64}; break;
      case Architecture::GAT: c.hidden = {64, 64}; c.heads = 4; break;
      case Architecture::DGCN: c.hidden = {64}; c.depth = 8; break;
    }
    return c;
  }
};

struct Param {
  std::string name;
  Matrix value;
};

struct ModelParams {
  ModelConfig config;
  std::vector<Param> params;

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].name == name) return i;
    }
    throw Error(ErrorCode::InvalidArgument, "no parameter named " + std::string(name));
  }
  const Matrix& operator[](std::string_view name) const { return params[index_of(name)].value; }
  Matrix& operator[](std::string_view name) { return params[index_of(name)].value; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  bool all_finite() const {
    return std::all_of(params.begin(), params.end(),
                       [](const Param& p) { return p.value.allFinite(); });
  }

  /// Layer widths from input to output, for checkpoint headers.
  std::vector<std::size_t> layer_dims() const {
    const auto& c = config;
    std::vector<std::size_t> dims{c.input_dim};
    switch (c.architecture) {
      case Architecture::WGCN:
        dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
        dims.push_back(1);
        break;
      case Architecture::GCN:
        dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
        dims.push_back(c.embedding_dim);
        break;
      case Architecture::GAT:
        for (std::size_t l = 0; l < c.hidden.size(); ++l) {
          dims.push_back(l + 1 < c.hidden.size() ? c.hidden[l] * c.heads : c.hidden[l]);
        }
        dims.push_back(c.embedding_dim);
        break;
      case Architecture::DGCN:
        for (std::size_t l = 0; l <= c.depth; ++l) dims.push_back(c.hidden.at(0));
        dims.push_back(c.embedding_dim);
        break;
    }
    return dims;
  }
};

using Gradients = std::vector<Matrix>;

inline Gradients zero_gradients(const ModelParams& m) {
  Gradients g;
  g.reserve(m.params.size());
  for (const auto& p : m.params) g.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  return g;
}

namespace detail {

inline Matrix glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out, std::size_t rows,
                     std::size_t cols) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-limit, limit);
  }
  return m;
}

inline Matrix zeros(std::size_t rows, std::size_t cols) {
  return Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace detail

/// Seeded Glorot-uniform weights, zero biases, unit LayerNorm gains.
inline ModelParams init_params(const ModelConfig& config) {
  if (config.input_dim == 0 || config.hidden.empty()) {
    throw Error(ErrorCode::InvalidArgument, "model config needs input_dim and hidden sizes");
  }
  ModelParams m;
  m.config = config;
  Rng rng(config.seed);
  auto add = [&](std::string name, Matrix v) { m.params.push_back({std::move(name), std::move(v)}); };
  auto dense = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    add(prefix + ".W", detail::glorot(rng, in, out, in, out));
    add(prefix + ".b", detail::zeros(1, out));
  };
  const auto& c = config;
  switch (c.architecture) {
    case Architecture::WGCN:
    case Architecture::GCN: {
      std::vector<std::size_t> dims{c.input_dim};
      dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
      if (c.architecture == Architecture::WGCN) dims.push_back(1);
      for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        dense("gcn" + std::to_string(l), dims[l], dims[l + 1]);
      }
      if (c.architecture == Architecture::GCN) dense("readout", dims.back(), c.embedding_dim);
      break;
    }
    case Architecture::GAT: {
      std::size_t in = c.input_dim;
      for (std::size_t l = 0; l < c.hidden.size(); ++l) {
        const std::size_t out = c.hidden[l];
        const bool last = l + 1 == c.hidden.size();
        const std::string layer = "gat" + std::to_string(l);
        for (std::size_t hd = 0; hd < c.heads; ++hd) {
          const std::string head = layer + ".h" + std::to_string(hd);
          add(head + ".W", detail::glorot(rng, in, out, in, out));
          add(head + ".a_src", detail::glorot(rng, out, 1, out, 1));
          add(head + ".a_dst", detail::glorot(rng, out, 1, out, 1));
        }
        const std::size_t width = last ? out : out * c.heads;
        add(layer + ".b", detail::zeros(1, width));
        in = width;
      }
      dense("readout", in, c.embedding_dim);
      break;
    }
    case Architecture::DGCN: {
      const std::size_t w = c.hidden.at(0);
      dense("input", c.input_dim, w);
      for (std::size_t k = 0; k < c.depth; ++k) {
        const std::string block = "block" + std::to_string(k);
        add(block + ".ln_gain", Matrix::Ones(1, static_cast<Eigen::Index>(w)));
        add(block + ".ln_bias", detail::zeros(1, w));
        dense(block, w, w);
      }
      dense("readout", w, c.embedding_dim);
      break;
    }
  }
  return m;
}

// --------------------------------------------------------------------------
// Forward / backward over a whole model

struct NodeWeights {
  Vector values;                // one per node; exactly 0 off the text mask
  std::vector<char> text_mask;  // 1 for text nodes
};

struct ForwardPass {
  Vector z_hat;
  /// wGCN: masked node weights. GAT: last-layer attention from the image
  /// node. Empty for GCN/DGCN.
  std::optional<NodeWeights> weights;
  Vector logits;  // wGCN only

  // caches
  std::vector<Matrix> activations;  // input to each layer
  std::vector<GcnCache> gcn;
  std::vector<GatCache> gat;
  std::vector<DgcnCache> dgcn;
  Matrix final_hidden;
  RowVector readout_input;
};

/// Softmax over text-node logits (or the raw logits in Raw mode); non-text
/// nodes get exactly zero weight.
inline NodeWeights mask_and_normalize(const Vector& logits, const std::vector<char>& mask,
                                      WeightMode mode) {
  NodeWeights w;
  w.text_mask = mask;
  w.values = Vector::Zero(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) {
      mx = std::max(mx, logits[i]);
      any = true;
    }
  }
  if (!any) throw Error(ErrorCode::NoTextNodes, "graph has no text nodes");
  if (mode == WeightMode::Raw) {
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
      if (mask[static_cast<std::size_t>(i)]) w.values[i] = logits[i];
    }
    return w;
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (mask[static_cast<std::size_t>(i)]) {
      w.values[i] = std::exp(logits[i] - mx);
      sum += w.values[i];
    }
  }
  w.values /= std::max(sum, kEpsilon);
  return w;
}

namespace detail {

inline std::vector<GatHeadParams> gat_heads(const ModelParams& m, std::size_t layer) {
  std::vector<GatHeadParams> heads;
  const std::string prefix = "gat" + std::to_string(layer);
  for (std::size_t hd = 0; hd < m.config.heads; ++hd) {
    const std::string head = prefix + ".h" + std::to_string(hd);
    heads.push_back({&m[head + ".W"], &m[head + ".a_src"], &m[head + ".a_dst"]});
  }
  return heads;
}

inline DgcnBlockParams dgcn_params(const ModelParams& m, std::size_t k) {
  const std::string b = "block" + std::to_string(k);
  return {&m[b + ".ln_gain"], &m[b + ".ln_bias"], &m[b + ".W"], &m[b + ".b"]};
}

inline std::size_t gcn_layer_count(const ModelParams& m) {
  return m.config.hidden.size() + (m.config.architecture == Architecture::WGCN ? 1 : 0);
}

}  // namespace detail

/// Runs the model on one graph. For wGCN, z_hat = sum_i w_i z_i with w the
/// masked softmax of the per-node scores; plain models read out the image
/// node (or the mean of all nodes) through a final dense layer.
inline ForwardPass forward(const ModelParams& m, const GraphInput& in) {
  const auto& c = m.config;
  ForwardPass f;
  if (in.text_count() == 0) throw Error(ErrorCode::NoTextNodes, "graph has no text nodes");
  if (static_cast<std::size_t>(in.features.cols()) != c.input_dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "feature width " + std::to_string(in.features.cols()) + " != model input " +
                    std::to_string(c.input_dim));
  }
  Matrix h = in.features;
  switch (c.architecture) {
    case Architecture::WGCN:
    case Architecture::GCN: {
      const auto layers = detail::gcn_layer_count(m);
      f.gcn.resize(layers);
      for (std::size_t l = 0; l < layers; ++l) {
        const std::string p = "gcn" + std::to_string(l);
        const bool last = l + 1 == layers;
        const auto act = (last && c.architecture == Architecture::WGCN) ? Activation::Identity
                                                                        : Activation::ReLU;
        f.activations.push_back(h);
        h = gcn_layer(h, in.adjacency, m[p + ".W"], m[p + ".b"], act, &f.gcn[l]);
      }
      break;
    }
    case Architecture::GAT: {
      f.gat.resize(c.hidden.size());
      for (std::size_t l = 0; l < c.hidden.size(); ++l) {
        const bool last = l + 1 == c.hidden.size();
        f.activations.push_back(h);
        h = gat_layer(h, in.neighbors, detail::gat_heads(m, l), m["gat" + std::to_string(l) + ".b"],
                      !last, f.gat[l]);
      }
      // Interpretation weights: last-layer attention from the image node,
      // averaged over heads.
      const auto& last_cache = f.gat.back();
      const auto& nb = in.neighbors[static_cast<std::size_t>(in.image_node)];
      NodeWeights w;
      w.text_mask = in.text_mask;
      w.values = Vector::Zero(in.size());
      for (const auto& hc : last_cache.heads) {
        const auto& al = hc.alpha[static_cast<std::size_t>(in.image_node)];
        for (std::size_t t = 0; t < nb.size(); ++t) {
          w.values[nb[t]] += al[t] / static_cast<double>(last_cache.heads.size());
        }
      }
      f.weights = std::move(w);
      break;
    }
    case Architecture::DGCN: {
      f.activations.push_back(h);
      h = h * m["input.W"];
      h.rowwise() += m["input.b"].row(0);
      f.dgcn.resize(c.depth);
      for (std::size_t k = 0; k < c.depth; ++k) {
        f.activations.push_back(h);
        h = dgcn_block(h, in.adjacency, detail::dgcn_params(m, k), &f.dgcn[k]);
      }
      break;
    }
  }
  f.final_hidden = h;

  if (c.architecture == Architecture::WGCN) {
    f.logits = h.col(0);
    f.weights = mask_and_normalize(f.logits, in.text_mask, c.weight_mode);
    f.z_hat = in.embeddings.transpose() * f.weights->values;
    return f;
  }
  f.readout_input = c.readout == Readout::ImageNode ? RowVector(h.row(in.image_node))
                                                    : RowVector(h.colwise().mean());
  RowVector z = f.readout_input * m["readout.W"] + m["readout.b"].row(0);
  f.z_hat = z.transpose();
  return f;
}

/// Gradients of a scalar loss with respect to every parameter, given
/// d loss / d z_hat. Parameter order matches `m.params`.
inline Gradients backward(const ModelParams& m, const GraphInput& in, const ForwardPass& f,
                          const Vector& d_z_hat) {
  const auto& c = m.config;
  Gradients g = zero_gradients(m);
  auto slot = [&](const std::string& name) -> Matrix& { return g[m.index_of(name)]; };

  Matrix d_h;
  if (c.architecture == Architecture::WGCN) {
    const auto& w = f.weights->values;
    const Vector d_w = in.embeddings * d_z_hat;
    Vector d_logits = Vector::Zero(w.size());
    if (c.weight_mode == WeightMode::Softmax) {
      double dot = 0.0;
      for (Eigen::Index i = 0; i < w.size(); ++i) dot += w[i] * d_w[i];
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (in.text_mask[static_cast<std::size_t>(i)]) d_logits[i] = w[i] * (d_w[i] - dot);
      }
    } else {
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (in.text_mask[static_cast<std::size_t>(i)]) d_logits[i] = d_w[i];
      }
    }
    d_h = d_logits;
  } else {
    const RowVector dz = d_z_hat.transpose();
    slot("readout.W") = f.readout_input.transpose() * dz;
    slot("readout.b") = dz;
    const RowVector d_r = dz * m["readout.W"].transpose();
    d_h = Matrix::Zero(f.final_hidden.rows(), f.final_hidden.cols());
    if (c.readout == Readout::ImageNode) {
      d_h.row(in.image_node) = d_r;
    } else {
      d_h.rowwise() += d_r / static_cast<double>(d_h.rows());
    }
  }

  switch (c.architecture) {
    case Architecture::WGCN:
    case Architecture::GCN: {
      const auto layers = detail::gcn_layer_count(m);
      for (std::size_t l = layers; l-- > 0;) {
        const std::string p = "gcn" + std::to_string(l);
        const bool last = l + 1 == layers;
        const auto act = (last && c.architecture == Architecture::WGCN) ? Activation::Identity
                                                                        : Activation::ReLU;
        auto lg = gcn_layer_backward(d_h, in.adjacency, m[p + ".W"], act, f.gcn[l]);
        slot(p + ".W") = std::move(lg.d_weight);
        slot(p + ".b") = std::move(lg.d_bias);
        d_h = std::move(lg.d_input);
      }
      break;
    }
    case Architecture::GAT: {
      for (std::size_t l = c.hidden.size(); l-- > 0;) {
        const bool last = l + 1 == c.hidden.size();
        const std::string layer = "gat" + std::to_string(l);
        auto lg = gat_layer_backward(d_h, f.activations[l], in.neighbors, detail::gat_heads(m, l),
                                     !last, f.gat[l]);
        for (std::size_t hd = 0; hd < c.heads; ++hd) {
          const std::string head = layer + ".h" + std::to_string(hd);
          slot(head + ".W") = std::move(lg.heads[hd].d_weight);
          slot(head + ".a_src") = std::move(lg.heads[hd].d_att_src);
          slot(head + ".a_dst") = std::move(lg.heads[hd].d_att_dst);
        }
        slot(layer + ".b") = std::move(lg.d_bias);
        d_h = std::move(lg.d_input);
      }
      break;
    }
    case Architecture::DGCN: {
      for (std::size_t k = c.depth; k-- > 0;) {
        const std::string b = "block" + std::to_string(k);
        auto bg = dgcn_block_backward(d_h, in.adjacency, detail::dgcn_params(m, k), f.dgcn[k]);
        slot(b + ".ln_gain") = std::move(bg.d_ln_gain);
        slot(b + ".ln_bias") = std::move(bg.d_ln_bias);
        slot(b + ".W") = std::move(bg.d_weight);
        slot(b + ".b") = std::move(bg.d_bias);
        d_h = std::move(bg.d_input);
      }
      slot("input.W") = f.activations[0].transpose() * d_h;
      slot("input.b") = d_h.colwise().sum();
      break;
    }
  }
  return g;
}

struct LossAndGrads {
  double loss = 0.0;
  ForwardPass pass;
  Gradients grads;
};

/// Forward, cosine loss against z_star, and backward in one call.
inline LossAndGrads loss_and_gradients(const ModelParams& m, const GraphInput& in,
                                       const Vector& z_star) {
  LossAndGrads out;
  out.pass = forward(m, in);
  out.loss = cosine_loss(out.pass.z_hat, z_star);
  out.grads = backward(m, in, out.pass, cosine_loss_grad(out.pass.z_hat, z_star));
  return out;
}

}  // namespace wice::gnn
