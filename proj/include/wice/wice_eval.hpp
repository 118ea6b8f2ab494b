#pragma once

// Context extraction: model-driven choices, the heuristic baselines, the
// per-page WICE loss, and the regression/WICE correlation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wice/dom_graph.hpp"
#include "wice/error.hpp"
#include "wice/featurize.hpp"
#include "wice/gnn.hpp"
#include "wice/rng.hpp"
#include "wice/text.hpp"
#include "wice/training.hpp"

namespace wice {

enum class Method { WGCN, GCN, GAT, DGCN, Distance, Title, TextAfterImage, Blind, Random, Oracle };

inline constexpr std::array<std::pair<Method, std::string_view>, 10> kMethodNames{{
    {Method::WGCN, "wgcn"},
    {Method::GCN, "gcn"},
    {Method::GAT, "gat"},
    {Method::DGCN, "dgcn"},
    {Method::Distance, "distance"},
    {Method::Title, "title"},
    {Method::TextAfterImage, "text_after_image"},
    {Method::Blind, "blind"},
    {Method::Random, "random"},
    {Method::Oracle, "oracle"},
}};

inline std::string_view to_string(Method m) {
  for (const auto& [k, v] : kMethodNames) {
    if (k == m) return v;
  }
  return "unknown";
}

inline Method method_from_string(std::string_view s) {
  for (const auto& [k, v] : kMethodNames) {
    if (v == s) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown method '" + std::string(s) + "'");
}

inline bool needs_model(Method m) {
  return m == Method::WGCN || m == Method::GCN || m == Method::GAT || m == Method::DGCN ||
         m == Method::Blind;
}

inline std::optional<gnn::Architecture> method_architecture(Method m) {
  switch (m) {
    case Method::WGCN: return gnn::Architecture::WGCN;
    case Method::GCN: return gnn::Architecture::GCN;
    case Method::GAT: return gnn::Architecture::GAT;
    case Method::DGCN: return gnn::Architecture::DGCN;
    default: return std::nullopt;
  }
}

struct WiceResult {
  std::string page_id;
  Method method = Method::Oracle;
  std::optional<int> chosen_node;
  std::optional<gnn::NodeWeights> weights;
  double wice_loss = 0.0;
  std::optional<double> regression_loss;
};

// --------------------------------------------------------------------------
// Node choice rules

/// Highest-weight text node; ties go to the earliest node id.
inline int extract_context(const gnn::NodeWeights& w) {
  int best = -1;
  for (Eigen::Index i = 0; i < w.values.size(); ++i) {
    if (!w.text_mask[static_cast<std::size_t>(i)]) continue;
    if (best < 0 || w.values[i] > w.values[best]) best = static_cast<int>(i);
  }
  if (best < 0) throw Error(ErrorCode::NoTextNodes, "no text node to choose");
  return best;
}

/// Optional extension: text nodes sorted by decreasing weight, at most `k`
/// of them, keeping only weights >= `min_weight`.
inline std::vector<int> extract_context_top(const gnn::NodeWeights& w, std::size_t k,
                                            double min_weight = -std::numeric_limits<double>::infinity()) {
  std::vector<int> ids;
  for (Eigen::Index i = 0; i < w.values.size(); ++i) {
    if (w.text_mask[static_cast<std::size_t>(i)] && w.values[i] >= min_weight) {
      ids.push_back(static_cast<int>(i));
    }
  }
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) { return w.values[a] > w.values[b]; });
  if (ids.size() > k) ids.resize(k);
  return ids;
}

/// Text node whose embedding is most cosine-similar to `query`.
inline int most_similar_node(const Vector& query, const EmbeddingMatrix& emb) {
  int best = -1;
  double best_cos = -std::numeric_limits<double>::infinity();
  for (const auto& [id, z] : emb.node_vectors) {  // ascending node id
    const double c = gnn::cosine_similarity(query, z);
    if (c > best_cos) {
      best_cos = c;
      best = id;
    }
  }
  if (best < 0) throw Error(ErrorCode::NoTextNodes, "no text node to choose");
  return best;
}

inline int baseline_blind(const Vector& z_hat, const EmbeddingMatrix& emb) {
  return most_similar_node(z_hat, emb);
}

inline int baseline_oracle(const EmbeddingMatrix& emb) {
  return most_similar_node(emb.reference_vector, emb);
}

/// Uniform over text nodes, a pure function of (page_id, seed).
inline int baseline_random(const DomGraph& g, std::uint64_t seed) {
  const auto texts = g.text_nodes();
  if (texts.empty()) throw Error(ErrorCode::NoTextNodes, "page " + g.page_id);
  Rng rng(mix64(text::fnv1a64(g.page_id) ^ mix64(seed)));
  return texts[rng.below(texts.size())];
}

struct DistanceOutput {
  gnn::NodeWeights weights;  // normalized 1/d over text nodes
  Vector z_hat;              // sum of (1/d_i) z_i, unnormalized weights
};

/// Inverse-distance weighting around the main image.
inline DistanceOutput baseline_distance(const DomGraph& g, const EmbeddingMatrix& emb) {
  const auto dist = distances_from(g, g.image_node());
  DistanceOutput out;
  out.weights.values = Vector::Zero(static_cast<Eigen::Index>(g.nodes.size()));
  out.weights.text_mask.assign(g.nodes.size(), 0);
  out.z_hat = Vector::Zero(static_cast<Eigen::Index>(emb.dim));
  double sum = 0.0;
  for (const auto& [id, z] : emb.node_vectors) {
    const int d = dist[static_cast<std::size_t>(id)];
    if (d < 1) throw Error(ErrorCode::BadFormat, "text node at distance 0 from the image");
    const double w = 1.0 / d;
    out.weights.values[id] = w;
    out.weights.text_mask[static_cast<std::size_t>(id)] = 1;
    out.z_hat += w * z;
    sum += w;
  }
  if (sum == 0.0) throw Error(ErrorCode::NoTextNodes, "page " + g.page_id);
  out.weights.values /= sum;
  return out;
}

/// Text node nearest to the image; ties go to document order.
inline int text_after_image(const DomGraph& g) {
  const auto dist = distances_from(g, g.image_node());
  int best = -1;
  for (int id : g.text_nodes()) {
    if (best < 0 || dist[static_cast<std::size_t>(id)] < dist[static_cast<std::size_t>(best)]) best = id;
  }
  if (best < 0) throw Error(ErrorCode::NoTextNodes, "page " + g.page_id);
  return best;
}

// --------------------------------------------------------------------------
// Per-page evaluation

struct EvalOptions {
  std::uint64_t random_seed = 0;
};

inline double node_loss(const EmbeddingMatrix& emb, int node) {
  return gnn::cosine_loss(emb.node_vectors.at(node), emb.reference_vector);
}

/// One page, one method. `model` must be set for model-driven methods and
/// match the method's architecture. Throws NoTitle for the title baseline
/// on pages without a title.
inline WiceResult evaluate_page(Method method, const Example& ex, const gnn::ModelParams* model,
                                const EvalOptions& opt = {}) {
  const auto& g = *ex.graph;
  const auto& emb = ex.emb;
  WiceResult r;
  r.page_id = g.page_id;
  r.method = method;
  if (needs_model(method)) {
    if (!model) throw Error(ErrorCode::MissingPrerequisite, "checkpoint for method " + std::string(to_string(method)));
    if (auto arch = method_architecture(method); arch && *arch != model->config.architecture) {
      throw Error(ErrorCode::InvalidArgument,
                  "method " + std::string(to_string(method)) + " needs a " +
                      std::string(gnn::to_string(*arch)) + " checkpoint, got " +
                      std::string(gnn::to_string(model->config.architecture)));
    }
  }
  switch (method) {
    case Method::WGCN: {
      auto f = gnn::forward(*model, ex.input);
      r.regression_loss = gnn::cosine_loss(f.z_hat, emb.reference_vector);
      r.chosen_node = extract_context(*f.weights);
      r.weights = std::move(f.weights);
      break;
    }
    case Method::GAT: {
      auto f = gnn::forward(*model, ex.input);
      r.regression_loss = gnn::cosine_loss(f.z_hat, emb.reference_vector);
      // Attention from the image node restricted to text nodes; when it
      // reaches none, fall back to the blind rule on the regressed vector.
      gnn::NodeWeights w = *f.weights;
      w.text_mask = ex.input.text_mask;
      double mass = 0.0;
      for (Eigen::Index i = 0; i < w.values.size(); ++i) {
        if (!w.text_mask[static_cast<std::size_t>(i)]) w.values[i] = 0.0;
        mass += w.values[i];
      }
      if (mass > 0.0) {
        w.values /= mass;
        r.chosen_node = extract_context(w);
      } else {
        r.chosen_node = baseline_blind(f.z_hat, emb);
      }
      r.weights = std::move(w);
      break;
    }
    case Method::GCN:
    case Method::DGCN:
    case Method::Blind: {
      const auto f = gnn::forward(*model, ex.input);
      r.regression_loss = gnn::cosine_loss(f.z_hat, emb.reference_vector);
      r.chosen_node = baseline_blind(f.z_hat, emb);
      break;
    }
    case Method::Distance: {
      auto d = baseline_distance(g, emb);
      r.regression_loss = gnn::cosine_loss(d.z_hat, emb.reference_vector);
      r.chosen_node = extract_context(d.weights);
      r.weights = std::move(d.weights);
      break;
    }
    case Method::TextAfterImage: r.chosen_node = text_after_image(g); break;
    case Method::Random: r.chosen_node = baseline_random(g, opt.random_seed); break;
    case Method::Oracle: r.chosen_node = baseline_oracle(emb); break;
    case Method::Title: {
      if (!emb.title_vector) throw Error(ErrorCode::NoTitle, "page " + g.page_id);
      r.wice_loss = gnn::cosine_loss(*emb.title_vector, emb.reference_vector);
      return r;
    }
  }
  r.wice_loss = node_loss(emb, *r.chosen_node);
  return r;
}

struct WiceEvaluation {
  Method method = Method::Oracle;
  double mean_wice_loss = 0.0;
  std::optional<double> mean_regression_loss;
  std::size_t count = 0;
  std::map<std::string, std::size_t> excluded;  // error code -> pages
  std::vector<WiceResult> records;               // page-id order of the input
};

inline WiceEvaluation evaluate_wice(Method method, const std::vector<const Example*>& pages,
                                    const gnn::ModelParams* model, const EvalOptions& opt = {}) {
  if (pages.empty()) throw Error(ErrorCode::EmptySet, "no pages to evaluate");
  WiceEvaluation ev;
  ev.method = method;
  double sum = 0.0, reg_sum = 0.0;
  std::size_t reg_count = 0;
  for (const auto* ex : pages) {
    try {
      auto r = evaluate_page(method, *ex, model, opt);
      sum += r.wice_loss;
      if (r.regression_loss) {
        reg_sum += *r.regression_loss;
        ++reg_count;
      }
      ev.records.push_back(std::move(r));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoTitle && e.code() != ErrorCode::NoTextNodes) throw;
      ++ev.excluded[std::string(to_string(e.code()))];
    }
  }
  ev.count = ev.records.size();
  if (ev.count) ev.mean_wice_loss = sum / static_cast<double>(ev.count);
  if (reg_count) ev.mean_regression_loss = reg_sum / static_cast<double>(reg_count);
  return ev;
}

// --------------------------------------------------------------------------
// Aggregates

/// Pearson r over paired samples.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(ErrorCode::DimensionMismatch, "pearson: series lengths differ");
  if (x.size() < 3) throw Error(ErrorCode::InvalidArgument, "pearson needs at least 3 pairs");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::DegenerateVariance, "constant series");
  return sxy / std::sqrt(sxx * syy);
}

/// Pearson r between regression and WICE loss over records that carry both.
inline double correlate_losses(const std::vector<WiceResult>& records) {
  std::vector<double> reg, wice;
  for (const auto& r : records) {
    if (!r.regression_loss) continue;
    reg.push_back(*r.regression_loss);
    wice.push_back(r.wice_loss);
  }
  return pearson(reg, wice);
}

/// Fraction of pages with wice_loss <= max_loss (similarity >= 1 - max_loss).
inline double threshold_report(const std::vector<WiceResult>& records, double max_loss = 0.4) {
  if (records.empty()) return 0.0;
  const auto hits = std::count_if(records.begin(), records.end(),
                                  [&](const WiceResult& r) { return r.wice_loss <= max_loss; });
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

// --------------------------------------------------------------------------
// Results file

inline nlohmann::ordered_json result_to_json(const WiceResult& r) {
  nlohmann::ordered_json j;
  j["page_id"] = r.page_id;
  j["method"] = to_string(r.method);
  j["chosen_node"] = r.chosen_node ? nlohmann::ordered_json(*r.chosen_node) : nlohmann::ordered_json();
  if (r.weights) {
    auto w = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < r.weights->values.size(); ++i) {
      if (r.weights->text_mask[static_cast<std::size_t>(i)]) w.push_back({i, r.weights->values[i]});
    }
    j["weights"] = std::move(w);
  } else {
    j["weights"] = nullptr;
  }
  j["wice_loss"] = r.wice_loss;
  j["regression_loss"] = r.regression_loss ? nlohmann::ordered_json(*r.regression_loss)
                                           : nlohmann::ordered_json();
  return j;
}

inline void write_results(std::ostream& out, const std::vector<WiceResult>& records) {
  for (const auto& r : records) out << result_to_json(r).dump() << '\n';
}

inline nlohmann::ordered_json summary_to_json(const WiceEvaluation& ev, double threshold = 0.4) {
  nlohmann::ordered_json j;
  j["method"] = to_string(ev.method);
  j["mean_wice_loss"] = ev.mean_wice_loss;
  j["mean_regression_loss"] = ev.mean_regression_loss ? nlohmann::ordered_json(*ev.mean_regression_loss)
                                                      : nlohmann::ordered_json();
  j["count"] = ev.count;
  j["excluded"] = ev.excluded;
  j["threshold"] = threshold;
  j["fraction_within_threshold"] = threshold_report(ev.records, threshold);
  return j;
}

}  // namespace wice
