#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "wice/dom_graph.hpp"
#include "wice/featurize.hpp"
#include "wice/gnn.hpp"
#include "wice/rng.hpp"

namespace wice::testkit {

/// Random tree: the first half of the nodes are elements wired to earlier
/// elements, the rest are text leaves hung on random elements. Node 1 (or 0
/// for tiny graphs) is the main image.
inline DomGraph random_graph(std::size_t n, Rng& rng) {
  DomGraph g;
  g.page_id = "rand";
  g.reference_text = "reference";
  const std::size_t elements = std::max<std::size_t>(1, n / 2);
  for (std::size_t i = 0; i < n; ++i) {
    DomNode node;
    node.node_id = static_cast<int>(i);
    if (i < elements) {
      node.raw_tag = "div";
      node.tag_group = static_cast<int>(rng.below(21));
      node.kind = NodeKind::Element;
    } else {
      node.raw_tag = "#text";
      node.tag_group = static_cast<int>(TagGroup::TextLeaf);
      node.kind = NodeKind::Text;
      node.text = "t" + std::to_string(i);
    }
    g.nodes.push_back(node);
    if (i > 0) {
      const auto parent = i < elements ? rng.below(i) : rng.below(elements);
      g.edges.emplace_back(static_cast<int>(parent), static_cast<int>(i));
    }
  }
  const std::size_t image = elements > 1 ? 1 : 0;
  g.nodes[image].kind = NodeKind::Image;
  g.nodes[image].raw_tag = "img";
  g.nodes[image].tag_group = static_cast<int>(TagGroup::Image);
  g.nodes[image].is_main_image = true;
  return g;
}

inline Vector random_unit(std::size_t dim, Rng& rng) {
  Vector v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-1.0, 1.0);
  return v / v.norm();
}

inline EmbeddingMatrix random_embeddings(const DomGraph& g, std::size_t dim, Rng& rng) {
  EmbeddingMatrix e;
  e.dim = dim;
  e.provider_id = "random";
  for (const auto& n : g.nodes) {
    if (n.kind == NodeKind::Text) e.node_vectors[n.node_id] = random_unit(dim, rng);
  }
  e.reference_vector = random_unit(dim, rng);
  return e;
}

struct RandomCase {
  DomGraph graph;
  EmbeddingMatrix emb;
  gnn::GraphInput input;
};

inline RandomCase random_case(std::size_t n, std::size_t dim, Rng& rng) {
  RandomCase c;
  c.graph = random_graph(n, rng);
  c.emb = random_embeddings(c.graph, dim, rng);
  c.input = gnn::make_input(c.graph, assemble_features(c.graph, c.emb, dim), c.emb);
  return c;
}

/// Small widths so every scalar can be finite-differenced quickly.
inline gnn::ModelConfig small_config(gnn::Architecture arch, std::size_t dim, std::uint64_t seed) {
  auto c = gnn::ModelConfig::defaults(arch, dim, seed);
  switch (arch) {
    case gnn::Architecture::WGCN: c.hidden = {7, 5}; break;
    case gnn::Architecture::GCN: c.hidden = {7, 5}; break;
    case gnn::Architecture::GAT: c.hidden = {4, 5}; c.heads = 3; break;
    case gnn::Architecture::DGCN: c.hidden = {6}; c.depth = 3; break;
  }
  return c;
}

/// Replaces every parameter (biases and LayerNorm terms included) with
/// random values so no activation sits at a kink by construction.
inline void randomize(gnn::ModelParams& m, Rng& rng, double scale = 0.5) {
  for (auto& p : m.params) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.data()[i] = rng.uniform(-scale, scale);
    }
  }
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Central differences on every scalar. Relative error is
/// |a - n| / max(|a|, |n|, floor).
inline GradCheck finite_difference_check(gnn::ModelParams m, const gnn::GraphInput& in,
                                         const Vector& z_star, double h = 1e-5,
                                         double floor = 1e-6) {
  const auto analytic = gnn::loss_and_gradients(m, in, z_star).grads;
  GradCheck out;
  for (std::size_t k = 0; k < m.params.size(); ++k) {
    auto& value = m.params[k].value;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double saved = value.data()[i];
      value.data()[i] = saved + h;
      const double up = gnn::cosine_loss(gnn::forward(m, in).z_hat, z_star);
      value.data()[i] = saved - h;
      const double down = gnn::cosine_loss(gnn::forward(m, in).z_hat, z_star);
      value.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[k].data()[i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = m.params[k].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

}  // namespace wice::testkit
