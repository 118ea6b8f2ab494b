#pragma once

// Tolerant HTML tokenizer and tree builder. It follows the HTML5 recovery
// rules that matter for article markup (implied end tags for p/li/dd/dt,
// table cell and row nesting, void and raw-text elements) but does not
// synthesize html/head/body and skips the adoption agency algorithm.

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wice/error.hpp"
#include "wice/text.hpp"

namespace wice::html {

enum class NodeType { Document, Element, Text, Comment };

struct Attribute {
  std::string name;
  std::string value;
};

struct Node {
  NodeType type = NodeType::Element;
  std::string tag;  // lowercase; empty for non-elements
  std::vector<Attribute> attributes;
  std::string data;  // text or comment content
  int parent = -1;
  std::vector<int> children;

  const std::string* attr(std::string_view name) const {
    for (const auto& a : attributes) {
      if (a.name == name) return &a.value;
    }
    return nullptr;
  }

  void erase_attr(std::string_view name) {
    std::erase_if(attributes, [&](const Attribute& a) { return a.name == name; });
  }

  bool is_element(std::string_view t) const {
    return type == NodeType::Element && tag == t;
  }
};

/// Arena-backed tree; node ids are indices and stay valid until the tree is
/// rebuilt by one of the transforming functions.
class DomTree {
 public:
  DomTree() {
    Node doc;
    doc.type = NodeType::Document;
    nodes_.push_back(std::move(doc));
  }

  int root() const { return root_; }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  Node& node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }

  int append(int parent, Node n) {
    n.parent = parent;
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(n));
    if (parent >= 0) nodes_[static_cast<std::size_t>(parent)].children.push_back(id);
    return id;
  }

  /// Ids reachable from the root, in document (pre-)order.
  std::vector<int> preorder() const {
    std::vector<int> order;
    std::vector<int> stack{root_};
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      order.push_back(id);
      const auto& ch = node(id).children;
      for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
    }
    return order;
  }

  std::size_t reachable_count() const { return preorder().size(); }

 private:
  std::vector<Node> nodes_;
  int root_ = 0;
};

namespace detail {

template <std::size_t N>
bool contains(const std::array<std::string_view, N>& set, std::string_view s) {
  return std::find(set.begin(), set.end(), s) != set.end();
}

inline constexpr std::array<std::string_view, 16> kVoid = {
    "area", "base", "br", "col", "embed", "hr", "img", "input",
    "link", "meta", "param", "source", "track", "wbr", "keygen", "basefont"};

inline constexpr std::array<std::string_view, 8> kRawText = {
    "script", "style", "textarea", "title", "xmp", "iframe", "noembed", "noframes"};

// Start tags that implicitly close an open <p>.
inline constexpr std::array<std::string_view, 35> kClosesParagraph = {
    "address", "article", "aside", "blockquote", "center", "details", "dialog",
    "dir", "div", "dl", "fieldset", "figcaption", "figure", "footer", "form",
    "h1", "h2", "h3", "h4", "h5", "h6", "header", "hgroup", "hr", "main",
    "menu", "nav", "ol", "p", "pre", "section", "table", "ul", "li", "dd"};

inline constexpr std::array<std::string_view, 6> kHeadings = {"h1", "h2", "h3",
                                                              "h4", "h5", "h6"};

// Elements that bound the search for an open li/dd/dt.
inline constexpr std::array<std::string_view, 14> kListScopeStop = {
    "ul", "ol", "menu", "dl", "table", "td", "th", "body", "html", "article",
    "section", "main", "aside", "blockquote"};

// Elements that bound an implicit p closing (button scope).
inline constexpr std::array<std::string_view, 12> kButtonScope = {
    "button", "table", "td", "th", "html", "caption", "marquee", "object",
    "applet", "template", "svg", "math"};

inline constexpr std::array<std::string_view, 3> kTableSections = {"tbody", "thead",
                                                                   "tfoot"};

struct Entity {
  std::string_view name;
  char32_t cp;
};

inline constexpr std::array<Entity, 40> kEntities = {{
    {"amp", U'&'},      {"lt", U'<'},        {"gt", U'>'},
    {"quot", U'"'},     {"apos", U'\''},     {"nbsp", 0xA0},
    {"copy", 0xA9},     {"reg", 0xAE},       {"trade", 0x2122},
    {"mdash", 0x2014},  {"ndash", 0x2013},   {"hellip", 0x2026},
    {"laquo", 0xAB},    {"raquo", 0xBB},     {"lsquo", 0x2018},
    {"rsquo", 0x2019},  {"ldquo", 0x201C},   {"rdquo", 0x201D},
    {"bull", 0x2022},   {"middot", 0xB7},    {"euro", 0x20AC},
    {"eacute", 0xE9},   {"egrave", 0xE8},    {"ecirc", 0xEA},
    {"agrave", 0xE0},   {"acirc", 0xE2},     {"ccedil", 0xE7},
    {"ocirc", 0xF4},    {"ucirc", 0xFB},     {"ugrave", 0xF9},
    {"icirc", 0xEE},    {"iuml", 0xEF},      {"euml", 0xEB},
    {"auml", 0xE4},     {"ouml", 0xF6},      {"uuml", 0xFC},
    {"szlig", 0xDF},    {"ntilde", 0xF1},    {"Eacute", 0xC9},
    {"deg", 0xB0},
}};

inline std::string decode_entities(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '&') {
      out.push_back(s[i++]);
      continue;
    }
    const auto semi = s.find(';', i + 1);
    if (semi == std::string_view::npos || semi - i > 12) {
      out.push_back(s[i++]);
      continue;
    }
    const auto body = s.substr(i + 1, semi - i - 1);
    char32_t cp = 0;
    bool ok = false;
    if (!body.empty() && body[0] == '#') {
      unsigned long v = 0;
      bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
      const auto digits = body.substr(hex ? 2 : 1);
      ok = !digits.empty();
      for (char c : digits) {
        int d = -1;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (hex && c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (hex && c >= 'A' && c <= 'F') d = c - 'A' + 10;
        if (d < 0 || v > 0x10FFFF) {
          ok = false;
          break;
        }
        v = v * (hex ? 16 : 10) + static_cast<unsigned long>(d);
      }
      if (ok) {
        cp = (v == 0 || v > 0x10FFFF || (v >= 0xD800 && v <= 0xDFFF))
                 ? char32_t{0xFFFD}
                 : static_cast<char32_t>(v);
      }
    } else {
      for (const auto& e : kEntities) {
        if (e.name == body) {
          cp = e.cp;
          ok = true;
          break;
        }
      }
    }
    if (!ok) {
      out.push_back(s[i++]);
      continue;
    }
    text::append_utf8(out, cp);
    i = semi + 1;
  }
  return out;
}

inline bool is_name_char(char c) {
  return c != ' ' && c != '\t' && c != '\n' && c != '\r' && c != '\f' &&
         c != '/' && c != '>' && c != '=';
}

inline bool is_ws(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f';
}

inline bool ieq_prefix(std::string_view s, std::size_t pos, std::string_view p) {
  if (pos + p.size() > s.size()) return false;
  for (std::size_t k = 0; k < p.size(); ++k) {
    char c = s[pos + k];
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c != p[k]) return false;
  }
  return true;
}

class TreeBuilder {
 public:
  explicit TreeBuilder(DomTree& tree) : tree_(tree) { open_.push_back(tree.root()); }

  void text(std::string data) {
    if (data.empty()) return;
    auto& cur = tree_.node(current());
    if (!cur.children.empty()) {
      auto& last = tree_.node(cur.children.back());
      if (last.type == NodeType::Text) {
        last.data += data;
        return;
      }
    }
    Node n;
    n.type = NodeType::Text;
    n.data = std::move(data);
    tree_.append(current(), std::move(n));
  }

  void comment(std::string data) {
    Node n;
    n.type = NodeType::Comment;
    n.data = std::move(data);
    tree_.append(current(), std::move(n));
  }

  /// Returns the id of the inserted element.
  int start_tag(const std::string& tag, std::vector<Attribute> attrs,
                bool self_closing) {
    if (contains(kClosesParagraph, tag) && in_scope("p", kButtonScope)) {
      pop_until("p");
    }
    if (contains(kHeadings, tag) && contains(kHeadings, tree_.node(current()).tag)) {
      open_.pop_back();
    }
    if (tag == "li") {
      close_list_item({"li"});
    } else if (tag == "dd" || tag == "dt") {
      close_list_item({"dd", "dt"});
    } else if (tag == "option" && tree_.node(current()).tag == "option") {
      open_.pop_back();
    } else if (contains(kTableSections, tag)) {
      close_in_table_scope({"tbody", "thead", "tfoot", "tr", "td", "th"});
    } else if (tag == "tr") {
      close_in_table_scope({"tr", "td", "th"});
      if (tree_.node(current()).tag == "table") push_implied("tbody");
    } else if (tag == "td" || tag == "th") {
      close_in_table_scope({"td", "th"});
      if (tree_.node(current()).tag == "table") push_implied("tbody");
      if (contains(kTableSections, tree_.node(current()).tag)) push_implied("tr");
    }

    Node n;
    n.type = NodeType::Element;
    n.tag = tag;
    n.attributes = std::move(attrs);
    const int id = tree_.append(current(), std::move(n));
    if (!self_closing && !contains(kVoid, tag)) open_.push_back(id);
    return id;
  }

  void end_tag(const std::string& tag) {
    if (tag == "br") {
      start_tag("br", {}, true);
      return;
    }
    if (tag == "body" || tag == "html") return;
    for (std::size_t k = open_.size(); k-- > 1;) {
      if (tree_.node(open_[k]).tag == tag) {
        open_.resize(k);
        return;
      }
      // A stray end tag never escapes the table that is currently open.
      if (tree_.node(open_[k]).tag == "table" && tag != "table") return;
    }
  }

  int current() const { return open_.back(); }

 private:
  template <std::size_t N>
  bool in_scope(std::string_view tag, const std::array<std::string_view, N>& stop) const {
    for (std::size_t k = open_.size(); k-- > 1;) {
      const auto& t = tree_.node(open_[k]).tag;
      if (t == tag) return true;
      if (contains(stop, t)) return false;
    }
    return false;
  }

  void pop_until(std::string_view tag) {
    while (open_.size() > 1) {
      const bool hit = tree_.node(open_.back()).tag == tag;
      open_.pop_back();
      if (hit) return;
    }
  }

  void close_list_item(std::initializer_list<std::string_view> items) {
    for (std::size_t k = open_.size(); k-- > 1;) {
      const auto& t = tree_.node(open_[k]).tag;
      if (std::find(items.begin(), items.end(), t) != items.end()) {
        open_.resize(k);
        return;
      }
      if (contains(kListScopeStop, t)) return;
    }
  }

  void close_in_table_scope(std::initializer_list<std::string_view> tags) {
    for (std::size_t k = open_.size(); k-- > 1;) {
      const auto& t = tree_.node(open_[k]).tag;
      if (t == "table") return;
      if (std::find(tags.begin(), tags.end(), t) != tags.end()) {
        open_.resize(k);
        // Keep closing enclosing cells/rows that are also being replaced.
        close_in_table_scope(tags);
        return;
      }
    }
  }

  void push_implied(const std::string& tag) {
    Node n;
    n.type = NodeType::Element;
    n.tag = tag;
    open_.push_back(tree_.append(current(), std::move(n)));
  }

  DomTree& tree_;
  std::vector<int> open_;
};

}  // namespace detail

/// Parses raw bytes (invalid UTF-8 is replaced) into a DomTree rooted at a
/// document node. Script, style and comment contents are kept.
inline DomTree parse_html(std::string_view bytes) {
  const std::string src = text::sanitize_utf8(bytes);
  DomTree tree;
  detail::TreeBuilder builder(tree);
  std::size_t i = 0;
  std::string pending;
  auto flush_text = [&] {
    if (!pending.empty()) {
      builder.text(detail::decode_entities(pending));
      pending.clear();
    }
  };

  while (i < src.size()) {
    if (src[i] != '<') {
      pending.push_back(src[i++]);
      continue;
    }
    if (src.compare(i, 4, "<!--") == 0) {
      flush_text();
      const auto end = src.find("-->", i + 4);
      const auto stop = end == std::string::npos ? src.size() : end;
      builder.comment(src.substr(i + 4, stop - i - 4));
      i = end == std::string::npos ? src.size() : end + 3;
      continue;
    }
    if (i + 1 < src.size() && (src[i + 1] == '!' || src[i + 1] == '?')) {
      flush_text();
      const auto end = src.find('>', i);
      i = end == std::string::npos ? src.size() : end + 1;
      continue;
    }
    const bool closing = i + 1 < src.size() && src[i + 1] == '/';
    const std::size_t name_start = i + (closing ? 2 : 1);
    if (name_start >= src.size() ||
        !((src[name_start] >= 'a' && src[name_start] <= 'z') ||
          (src[name_start] >= 'A' && src[name_start] <= 'Z'))) {
      pending.push_back(src[i++]);
      continue;
    }
    flush_text();
    std::size_t p = name_start;
    while (p < src.size() && detail::is_name_char(src[p])) ++p;
    const std::string tag = text::to_lower_ascii(std::string_view(src).substr(name_start, p - name_start));

    std::vector<Attribute> attrs;
    bool self_closing = false;
    while (p < src.size() && src[p] != '>') {
      if (detail::is_ws(src[p])) {
        ++p;
        continue;
      }
      if (src[p] == '/') {
        self_closing = p + 1 < src.size() && src[p + 1] == '>';
        ++p;
        continue;
      }
      std::size_t a = p;
      while (p < src.size() && detail::is_name_char(src[p])) ++p;
      if (p == a) {
        ++p;  // lone '='
        continue;
      }
      Attribute attr;
      attr.name = text::to_lower_ascii(std::string_view(src).substr(a, p - a));
      while (p < src.size() && detail::is_ws(src[p])) ++p;
      if (p < src.size() && src[p] == '=') {
        ++p;
        while (p < src.size() && detail::is_ws(src[p])) ++p;
        if (p < src.size() && (src[p] == '"' || src[p] == '\'')) {
          const char q = src[p];
          const auto end = src.find(q, p + 1);
          const auto stop = end == std::string::npos ? src.size() : end;
          attr.value = detail::decode_entities(std::string_view(src).substr(p + 1, stop - p - 1));
          p = end == std::string::npos ? src.size() : end + 1;
        } else {
          std::size_t v = p;
          while (p < src.size() && !detail::is_ws(src[p]) && src[p] != '>') ++p;
          attr.value = detail::decode_entities(std::string_view(src).substr(v, p - v));
        }
      }
      if (!closing) {
        const bool dup = std::any_of(attrs.begin(), attrs.end(),
                                     [&](const Attribute& x) { return x.name == attr.name; });
        if (!dup) attrs.push_back(std::move(attr));
      }
    }
    i = p < src.size() ? p + 1 : src.size();

    if (closing) {
      builder.end_tag(tag);
      continue;
    }
    const int id = builder.start_tag(tag, std::move(attrs), self_closing);
    if (!self_closing && detail::contains(detail::kRawText, tag)) {
      std::size_t end = i;
      while (true) {
        end = src.find("</", end);
        if (end == std::string::npos || detail::ieq_prefix(src, end + 2, tag)) break;
        end += 2;
      }
      const auto stop = end == std::string::npos ? src.size() : end;
      std::string raw = src.substr(i, stop - i);
      if (tag == "title" || tag == "textarea") raw = detail::decode_entities(raw);
      if (!raw.empty()) {
        Node t;
        t.type = NodeType::Text;
        t.data = std::move(raw);
        tree.append(id, std::move(t));
      }
      builder.end_tag(tag);
      if (end == std::string::npos) {
        i = src.size();
      } else {
        const auto gt = src.find('>', end);
        i = gt == std::string::npos ? src.size() : gt + 1;
      }
    }
  }
  flush_text();

  const auto& all = tree.preorder();
  const bool has_element = std::any_of(all.begin(), all.end(), [&](int id) {
    return tree.node(id).type == NodeType::Element;
  });
  if (!has_element) {
    throw Error(ErrorCode::MalformedDocument, "no element could be recovered");
  }
  return tree;
}

/// Concatenated descendant text (raw, not normalized).
inline std::string text_content(const DomTree& tree, int id) {
  std::string out;
  std::vector<int> stack{id};
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    const auto& n = tree.node(cur);
    if (n.type == NodeType::Text) out += n.data;
    if (n.type == NodeType::Element && (n.tag == "script" || n.tag == "style")) continue;
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

/// Copies the subtree under `id`, optionally skipping nodes for which
/// `drop(node_id, node)` is true (their descendants go with them). The copy is
/// compacted so ids are dense and in document order.
template <typename Drop>
DomTree copy_subtree(const DomTree& src, int id, Drop&& drop) {
  DomTree out;
  const auto& top = src.node(id);
  if (top.type != NodeType::Document) {
    Node root_copy = top;
    root_copy.children.clear();
    root_copy.parent = -1;
    out.node(out.root()) = std::move(root_copy);
  }
  // (source id, destination parent)
  std::vector<std::pair<int, int>> stack;
  for (auto it = top.children.rbegin(); it != top.children.rend(); ++it) {
    stack.emplace_back(*it, out.root());
  }
  while (!stack.empty()) {
    const auto [sid, dparent] = stack.back();
    stack.pop_back();
    const auto& n = src.node(sid);
    if (drop(sid, n)) continue;
    Node c = n;
    c.children.clear();
    const int did = out.append(dparent, std::move(c));
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) {
      stack.emplace_back(*it, did);
    }
  }
  return out;
}

inline DomTree copy_subtree(const DomTree& src, int id) {
  return copy_subtree(src, id, [](int, const Node&) { return false; });
}

/// Serializes the tree back to markup; used by tests and debugging output.
inline std::string to_html(const DomTree& tree, int id) {
  const auto& n = tree.node(id);
  std::string out;
  switch (n.type) {
    case NodeType::Text: return n.data;
    case NodeType::Comment: return "<!--" + n.data + "-->";
    case NodeType::Document:
      for (int c : n.children) out += to_html(tree, c);
      return out;
    case NodeType::Element: break;
  }
  out += "<" + n.tag;
  for (const auto& a : n.attributes) out += " " + a.name + "=\"" + a.value + "\"";
  if (detail::contains(detail::kVoid, n.tag) && n.children.empty()) return out + "/>";
  out += ">";
  for (int c : n.children) out += to_html(tree, c);
  return out + "</" + n.tag + ">";
}

inline std::string to_html(const DomTree& tree) { return to_html(tree, tree.root()); }

}  // namespace wice::html
