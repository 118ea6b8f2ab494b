#pragma once

// HTML page -> DomGraph: content-root selection, pruning, main-image and
// reference-text extraction, and graph construction over the pruned tree.

#include <algorithm>
#include <fstream>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wice/error.hpp"
#include "wice/html.hpp"
#include "wice/tag_groups.hpp"
#include "wice/text.hpp"

namespace wice {

struct PageRecord {
  std::string page_id;
  std::string site_id;
  std::string url;
  std::string html;
  std::optional<std::string> language_hint;
};

/// Registrable domain approximation: lowercase host without "www." and
/// port, reduced to its last two labels (three for "co.uk"-style suffixes).
inline std::string site_id_from_url(std::string_view url) {
  auto pos = url.find("://");
  std::string_view rest = pos == std::string_view::npos ? url : url.substr(pos + 3);
  rest = rest.substr(0, rest.find_first_of("/?#"));
  if (const auto at = rest.rfind('@'); at != std::string_view::npos) rest = rest.substr(at + 1);
  rest = rest.substr(0, rest.find(':'));
  std::string host = text::to_lower_ascii(rest);
  const auto labels = text::split(host, '.');
  if (labels.size() <= 2) return host;
  static const std::set<std::string_view> kSecondLevel = {"co", "com", "org", "net",
                                                          "ac", "gov", "edu", "gouv"};
  std::size_t keep = 2;
  if (labels.back().size() == 2 && kSecondLevel.count(labels[labels.size() - 2])) keep = 3;
  keep = std::min(keep, labels.size());
  std::string out;
  for (std::size_t i = labels.size() - keep; i < labels.size(); ++i) {
    if (!out.empty()) out.push_back('.');
    out += labels[i];
  }
  return out;
}

enum class NodeKind { Element, Text, Image, ReferenceHolder };
enum class ReferenceSource { Alt, Figcaption, TitleAttr };

inline std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Element: return "element";
    case NodeKind::Text: return "text";
    case NodeKind::Image: return "image";
    case NodeKind::ReferenceHolder: return "reference-holder";
  }
  return "element";
}

inline std::string_view to_string(ReferenceSource s) {
  switch (s) {
    case ReferenceSource::Alt: return "alt";
    case ReferenceSource::Figcaption: return "figcaption";
    case ReferenceSource::TitleAttr: return "title-attr";
  }
  return "alt";
}

inline NodeKind node_kind_from_string(std::string_view s) {
  if (s == "element") return NodeKind::Element;
  if (s == "text") return NodeKind::Text;
  if (s == "image") return NodeKind::Image;
  if (s == "reference-holder") return NodeKind::ReferenceHolder;
  throw Error(ErrorCode::BadFormat, "unknown node kind '" + std::string(s) + "'");
}

inline ReferenceSource reference_source_from_string(std::string_view s) {
  if (s == "alt") return ReferenceSource::Alt;
  if (s == "figcaption") return ReferenceSource::Figcaption;
  if (s == "title-attr") return ReferenceSource::TitleAttr;
  throw Error(ErrorCode::BadFormat, "unknown reference source '" + std::string(s) + "'");
}

struct DomNode {
  int node_id = 0;
  std::string raw_tag;
  int tag_group = static_cast<int>(TagGroup::Unknown);
  NodeKind kind = NodeKind::Element;
  std::optional<std::string> text;
  bool is_main_image = false;
  /// Value of a data-wice-anchor attribute, when the element carries one.
  std::optional<std::string> anchor;

  bool is_text() const { return kind == NodeKind::Text; }
};

struct DomGraph {
  std::string page_id;
  std::string site_id;
  std::vector<DomNode> nodes;
  std::vector<std::pair<int, int>> edges;  // (parent, child)
  std::string reference_text;
  ReferenceSource reference_source = ReferenceSource::Alt;
  /// Document <title>, used only by the title baseline.
  std::optional<std::string> title;

  std::size_t size() const { return nodes.size(); }

  int image_node() const {
    for (const auto& n : nodes) {
      if (n.is_main_image) return n.node_id;
    }
    throw Error(ErrorCode::NoImage, "graph " + page_id + " has no main image");
  }

  std::vector<int> text_nodes() const {
    std::vector<int> out;
    for (const auto& n : nodes) {
      if (n.is_text()) out.push_back(n.node_id);
    }
    return out;
  }

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(nodes.size());
    for (const auto& [p, c] : edges) {
      adj[static_cast<std::size_t>(p)].push_back(c);
      adj[static_cast<std::size_t>(c)].push_back(p);
    }
    return adj;
  }
};

/// Throws BadFormat when a DomGraph violates its structural invariants.
/// `require_reference` is false for inference graphs built from pages that
/// carry no reference text.
inline void validate(const DomGraph& g, bool require_reference = true) {
  const auto n = g.nodes.size();
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::BadFormat, "graph " + g.page_id + ": " + what);
  };
  if (n == 0) fail("no nodes");
  if (g.edges.size() != n - 1) fail("edge count is not |nodes|-1");
  int main_images = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = g.nodes[i];
    if (node.node_id != static_cast<int>(i)) fail("node ids are not dense");
    if (node.tag_group < 0 || node.tag_group >= kTagGroupCount) fail("tag_group out of range");
    if (node.is_text() != node.text.has_value()) fail("text present iff kind=text");
    if (node.text && node.text->empty()) fail("empty text");
    if (node.is_main_image) ++main_images;
  }
  if (main_images != 1) fail("expected exactly one main image");
  std::vector<int> parent(n, -1);
  for (const auto& [p, c] : g.edges) {
    if (p < 0 || c < 0 || static_cast<std::size_t>(p) >= n || static_cast<std::size_t>(c) >= n) {
      fail("edge endpoint out of range");
    }
    if (parent[static_cast<std::size_t>(c)] != -1) fail("node with two parents");
    parent[static_cast<std::size_t>(c)] = p;
  }
  // n-1 edges, each non-root node has one parent; connected iff acyclic.
  std::vector<char> seen(n, 0);
  const auto adj = g.adjacency();
  std::vector<int> stack{0};
  seen[0] = 1;
  std::size_t visited = 1;
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    for (int nb : adj[static_cast<std::size_t>(cur)]) {
      if (!seen[static_cast<std::size_t>(nb)]) {
        seen[static_cast<std::size_t>(nb)] = 1;
        ++visited;
        stack.push_back(nb);
      }
    }
  }
  if (visited != n) fail("graph is not connected");
  if (require_reference && g.reference_text.empty()) fail("empty reference text");
}

// --------------------------------------------------------------------------
// Tree-level steps

/// Subtree rooted at the first <main>, else first <article>, else first
/// <body> in document order; the whole tree when none exists.
inline html::DomTree select_content_root(const html::DomTree& tree) {
  const auto order = tree.preorder();
  for (std::string_view want : {"main", "article", "body"}) {
    for (int id : order) {
      if (tree.node(id).is_element(want)) return html::copy_subtree(tree, id);
    }
  }
  return tree;
}

/// Tags removed (with their subtrees) before graph construction. Entries in
/// `outside_article` are removed only when no <article> ancestor exists.
struct PruneRules {
  std::set<std::string> tags;
  std::set<std::string> outside_article;

  /// One tag per line; "tag@outside-article" restricts the rule; '#' starts
  /// a comment.
  static PruneRules parse(std::string_view content) {
    PruneRules rules;
    for (auto line : text::split(content, '\n')) {
      line = text::trim(line.substr(0, line.find('#')));
      if (line.empty()) continue;
      const std::string entry = text::to_lower_ascii(line);
      constexpr std::string_view kSuffix = "@outside-article";
      if (entry.size() > kSuffix.size() && entry.ends_with(kSuffix)) {
        rules.outside_article.insert(entry.substr(0, entry.size() - kSuffix.size()));
      } else {
        rules.tags.insert(entry);
      }
    }
    return rules;
  }

  static PruneRules load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingPrerequisite, "denylist file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }
};

inline const PruneRules& default_prune_rules() {
  static const PruneRules rules{
      {"style", "script", "button", "noscript", "svg", "iframe", "form", "input",
       "select", "nav", "footer", "link", "meta"},
      {"header"}};
  return rules;
}

/// Removes denylisted elements with their subtrees, comments, and
/// whitespace-only text leaves.
inline html::DomTree prune_tree(const html::DomTree& tree,
                                const PruneRules& rules = default_prune_rules()) {
  // Pre-compute "inside article" per node since copy_subtree's predicate
  // only sees the node itself.
  std::vector<char> in_article(tree.size(), 0);
  for (int id : tree.preorder()) {
    const auto& n = tree.node(id);
    const bool parent_in = n.parent >= 0 && in_article[static_cast<std::size_t>(n.parent)];
    in_article[static_cast<std::size_t>(id)] = parent_in || n.is_element("article");
  }
  auto drop = [&](int id, const html::Node& n) {
    switch (n.type) {
      case html::NodeType::Comment: return true;
      case html::NodeType::Text: return text::normalize_whitespace(n.data).empty();
      case html::NodeType::Document: return false;
      case html::NodeType::Element: break;
    }
    if (rules.tags.count(n.tag)) return true;
    if (rules.outside_article.count(n.tag)) {
      return !in_article[static_cast<std::size_t>(id)];
    }
    return false;
  };
  return html::copy_subtree(tree, tree.root(), drop);
}

struct ImageSize {
  std::optional<double> width;
  std::optional<double> height;

  std::optional<double> area() const {
    if (!width || !height) return std::nullopt;
    return *width * *height;
  }
};

namespace detail {

/// Absolute pixel length ("640", "640px", "640.5 px"); nullopt otherwise.
inline std::optional<double> parse_pixels(std::string_view s) {
  s = text::trim(s);
  if (s.empty()) return std::nullopt;
  std::size_t i = 0;
  while (i < s.size() && ((s[i] >= '0' && s[i] <= '9') || s[i] == '.')) ++i;
  if (i == 0) return std::nullopt;
  auto rest = text::trim(s.substr(i));
  if (!rest.empty() && text::to_lower_ascii(rest) != "px") return std::nullopt;
  try {
    const double v = text::parse_double(s.substr(0, i));
    if (!(v >= 0)) return std::nullopt;
    return v;
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline std::optional<double> style_pixels(std::string_view style, std::string_view prop) {
  for (auto decl : text::split(style, ';')) {
    const auto colon = decl.find(':');
    if (colon == std::string_view::npos) continue;
    if (text::to_lower_ascii(text::trim(decl.substr(0, colon))) != prop) continue;
    return parse_pixels(decl.substr(colon + 1));
  }
  return std::nullopt;
}

}  // namespace detail

inline ImageSize image_size(const html::Node& img) {
  ImageSize size;
  if (const auto* w = img.attr("width")) size.width = detail::parse_pixels(*w);
  if (const auto* h = img.attr("height")) size.height = detail::parse_pixels(*h);
  if (const auto* style = img.attr("style")) {
    if (!size.width) size.width = detail::style_pixels(*style, "width");
    if (!size.height) size.height = detail::style_pixels(*style, "height");
  }
  return size;
}

/// The <img> with the largest width*height; document order breaks ties and
/// images of unknown size rank after all sized ones.
inline int select_main_image(const html::DomTree& tree) {
  int best = -1;
  std::optional<double> best_area;
  for (int id : tree.preorder()) {
    const auto& n = tree.node(id);
    if (!n.is_element("img")) continue;
    const auto area = image_size(n).area();
    if (best < 0) {
      best = id;
      best_area = area;
    } else if (area && (!best_area || *area > *best_area)) {
      best = id;
      best_area = area;
    }
  }
  if (best < 0) throw Error(ErrorCode::NoImage, "page contains no <img>");
  return best;
}

struct Reference {
  std::string text;
  ReferenceSource source = ReferenceSource::Alt;
  /// Tree id of the figcaption element when source is Figcaption.
  int figcaption_node = -1;
  /// Enclosing <figure>, if any.
  int figure_node = -1;
};

namespace detail {

inline int enclosing_figure(const html::DomTree& tree, int id) {
  for (int cur = tree.node(id).parent; cur >= 0; cur = tree.node(cur).parent) {
    if (tree.node(cur).is_element("figure")) return cur;
  }
  return -1;
}

/// First figcaption belonging to `figure` (not to a nested figure).
inline int figcaption_of(const html::DomTree& tree, int figure) {
  std::vector<int> stack;
  const auto& ch = tree.node(figure).children;
  for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const auto& n = tree.node(id);
    if (n.is_element("figcaption")) return id;
    if (n.is_element("figure")) continue;
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
  }
  return -1;
}

}  // namespace detail

/// Longest of alt, enclosing figure's figcaption, and the img title
/// attribute (code points after whitespace normalization). Ties go to
/// alt, then figcaption, then title.
inline Reference extract_reference_text(const html::DomTree& tree, int image) {
  const auto& img = tree.node(image);
  Reference best;
  std::size_t best_len = 0;
  auto consider = [&](std::string candidate, ReferenceSource src) {
    candidate = text::normalize_whitespace(candidate);
    const auto len = text::codepoint_count(candidate);
    if (len > best_len) {
      best_len = len;
      best.text = std::move(candidate);
      best.source = src;
    }
  };
  if (const auto* alt = img.attr("alt")) consider(*alt, ReferenceSource::Alt);
  best.figure_node = detail::enclosing_figure(tree, image);
  if (best.figure_node >= 0) {
    const int cap = detail::figcaption_of(tree, best.figure_node);
    if (cap >= 0) {
      consider(html::text_content(tree, cap), ReferenceSource::Figcaption);
      if (best.source == ReferenceSource::Figcaption) best.figcaption_node = cap;
    }
  }
  if (const auto* title = img.attr("title")) consider(*title, ReferenceSource::TitleAttr);
  if (best_len == 0) {
    throw Error(ErrorCode::NoReferenceText, "image has no alt, figcaption or title text");
  }
  return best;
}

/// Copy of the tree with the winning reference source removed: the
/// attribute for alt/title, the whole figcaption subtree otherwise. Node ids
/// are unchanged; the caption simply becomes unreachable.
inline html::DomTree excise_reference(const html::DomTree& tree, int image, const Reference& ref) {
  html::DomTree out = tree;
  switch (ref.source) {
    case ReferenceSource::Alt: out.node(image).erase_attr("alt"); break;
    case ReferenceSource::TitleAttr: out.node(image).erase_attr("title"); break;
    case ReferenceSource::Figcaption: {
      auto& parent = out.node(out.node(ref.figcaption_node).parent);
      std::erase(parent.children, ref.figcaption_node);
      break;
    }
  }
  return out;
}

/// Minimum text length (code points) for a text leaf to become a node.
inline constexpr std::size_t kMinTextLength = 2;

inline std::optional<std::string> document_title(const html::DomTree& tree) {
  for (int id : tree.preorder()) {
    if (tree.node(id).is_element("title")) {
      auto t = text::normalize_whitespace(html::text_content(tree, id));
      if (!t.empty()) return t;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

/// One DomNode per reachable element and per text leaf that survives
/// normalization, in document order, with parent-child edges.
/// `reference` may be null for inference-only graphs.
inline DomGraph build_graph(const html::DomTree& tree, int image, const Reference* reference) {
  DomGraph g;
  std::vector<int> graph_id(tree.size(), -1);
  for (int id : tree.preorder()) {
    const auto& n = tree.node(id);
    DomNode node;
    if (n.type == html::NodeType::Text) {
      auto t = text::normalize_whitespace(n.data);
      if (text::codepoint_count(t) < kMinTextLength) continue;
      node.raw_tag = "#text";
      node.tag_group = static_cast<int>(TagGroup::TextLeaf);
      node.kind = NodeKind::Text;
      node.text = std::move(t);
    } else if (n.type == html::NodeType::Element) {
      node.raw_tag = n.tag;
      node.tag_group = static_cast<int>(tag_group_of(n.tag));
      node.kind = n.tag == "img" ? NodeKind::Image : NodeKind::Element;
      if (const auto* a = n.attr("data-wice-anchor")) node.anchor = *a;
    } else if (n.type == html::NodeType::Document) {
      node.raw_tag = "#document";
      node.tag_group = static_cast<int>(TagGroup::Sectioning);
    } else {
      continue;
    }
    if (id == image) node.is_main_image = true;
    if (reference && reference->source == ReferenceSource::Figcaption &&
        id == reference->figure_node) {
      node.kind = NodeKind::ReferenceHolder;
    }
    node.node_id = static_cast<int>(g.nodes.size());
    graph_id[static_cast<std::size_t>(id)] = node.node_id;
    if (n.parent >= 0 && id != tree.root()) {
      const int p = graph_id[static_cast<std::size_t>(n.parent)];
      g.edges.emplace_back(p, node.node_id);
    }
    g.nodes.push_back(std::move(node));
  }
  if (reference) {
    g.reference_text = reference->text;
    g.reference_source = reference->source;
  }
  return g;
}

/// Breadth-first distances from `source` over undirected tree edges.
inline std::vector<int> distances_from(const DomGraph& g, int source) {
  if (source < 0 || static_cast<std::size_t>(source) >= g.nodes.size()) {
    throw Error(ErrorCode::UnknownNode, "node " + std::to_string(source));
  }
  const auto adj = g.adjacency();
  std::vector<int> dist(g.nodes.size(), -1);
  std::queue<int> q;
  dist[static_cast<std::size_t>(source)] = 0;
  q.push(source);
  while (!q.empty()) {
    const int cur = q.front();
    q.pop();
    for (int nb : adj[static_cast<std::size_t>(cur)]) {
      if (dist[static_cast<std::size_t>(nb)] < 0) {
        dist[static_cast<std::size_t>(nb)] = dist[static_cast<std::size_t>(cur)] + 1;
        q.push(nb);
      }
    }
  }
  return dist;
}

/// Length of the tree path between a and b.
inline int graph_distance(const DomGraph& g, int a, int b) {
  if (b < 0 || static_cast<std::size_t>(b) >= g.nodes.size()) {
    throw Error(ErrorCode::UnknownNode, "node " + std::to_string(b));
  }
  return distances_from(g, a)[static_cast<std::size_t>(b)];
}

// --------------------------------------------------------------------------
// Full page pipeline

/// parse -> content root -> prune -> main image -> reference -> excise ->
/// graph. Throws NoImage / NoReferenceText / MalformedDocument for pages
/// that cannot enter the corpus.
inline DomGraph preprocess_page(const PageRecord& page,
                                const PruneRules& rules = default_prune_rules()) {
  const auto parsed = html::parse_html(page.html);
  const auto title = document_title(parsed);
  const auto pruned = prune_tree(select_content_root(parsed), rules);
  const int image = select_main_image(pruned);
  const auto ref = extract_reference_text(pruned, image);
  const auto excised = excise_reference(pruned, image, ref);
  auto g = build_graph(excised, image, &ref);
  g.page_id = page.page_id;
  g.site_id = page.site_id.empty() ? site_id_from_url(page.url) : page.site_id;
  g.title = title;
  return g;
}

/// Same pipeline for pages at inference time, where the reference text is
/// optional; when present it is still excised.
inline DomGraph preprocess_for_inference(std::string_view html_bytes, std::string page_id,
                                         const PruneRules& rules = default_prune_rules()) {
  const auto parsed = html::parse_html(html_bytes);
  const auto title = document_title(parsed);
  const auto pruned = prune_tree(select_content_root(parsed), rules);
  const int image = select_main_image(pruned);
  std::optional<Reference> ref;
  try {
    ref = extract_reference_text(pruned, image);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoReferenceText) throw;
  }
  const auto tree = ref ? excise_reference(pruned, image, *ref) : pruned;
  auto g = build_graph(tree, image, ref ? &*ref : nullptr);
  g.page_id = std::move(page_id);
  g.title = title;
  return g;
}

}  // namespace wice
