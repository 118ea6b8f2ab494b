#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "support.hpp"
#include "wice/dom_graph.hpp"
#include "wice/graph_io.hpp"
#include "wice/synth.hpp"

namespace {

using namespace wice;

std::string dump_tree(const html::DomTree& t) {
  std::string out;
  auto rec = [&](auto&& self, int id, int depth) -> void {
    const auto& n = t.node(id);
    const std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
    if (n.type == html::NodeType::Text) {
      out += indent + '"' + n.data + "\"\n";
      return;
    }
    if (n.type == html::NodeType::Comment) return;
    out += indent + '<' + n.tag + ">\n";
    for (int c : n.children) self(self, c, depth + 1);
  };
  for (int c : t.node(t.root()).children) rec(rec, c, 0);
  return out;
}

struct TreeCase {
  std::string data;
  std::string tree;
};

std::vector<TreeCase> load_tree_cases() {
  std::ifstream in(std::string(WICE_TEST_DATA_DIR) + "/html5_trees.txt");
  std::vector<TreeCase> cases;
  std::string line;
  enum { None, Data, Tree } mode = None;
  while (std::getline(in, line)) {
    if (line == "#data") {
      cases.emplace_back();
      mode = Data;
    } else if (line == "#tree") {
      mode = Tree;
    } else if (mode == Data) {
      cases.back().data += line;
    } else if (mode == Tree && !line.empty()) {
      cases.back().tree += line + '\n';
    }
  }
  return cases;
}

html::DomTree parse(std::string_view s) { return html::parse_html(s); }

// ---------------------------------------------------------------------------

TEST(ParseHtml, SingleElement) {
  EXPECT_EQ(dump_tree(parse("<p>hi</p>")), "<p>\n  \"hi\"\n");
}

TEST(ParseHtml, UnclosedParagraphsBecomeSiblings) {
  const auto t = parse("<p>a<p>b");
  const auto& root = t.node(t.root());
  ASSERT_EQ(root.children.size(), 2u);
  EXPECT_TRUE(t.node(root.children[0]).is_element("p"));
  EXPECT_TRUE(t.node(root.children[1]).is_element("p"));
}

TEST(ParseHtml, EmptyInputIsMalformed) {
  EXPECT_THROW(
      {
        try {
          parse("");
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::MalformedDocument);
          throw;
        }
      },
      Error);
  EXPECT_THROW(parse("just text, no tags"), Error);
}

TEST(ParseHtml, MatchesReferenceParserTrees) {
  const auto cases = load_tree_cases();
  ASSERT_GE(cases.size(), 20u);
  for (const auto& c : cases) {
    EXPECT_EQ(dump_tree(parse(c.data)), c.tree) << "input: " << c.data;
  }
}

TEST(ParseHtml, InvalidUtf8IsReplaced) {
  const auto t = parse("<p>a\xff\xfe b</p>");
  const auto txt = html::text_content(t, t.root());
  EXPECT_NE(txt.find("\xEF\xBF\xBD"), std::string::npos);
}

TEST(ParseHtml, KeepsScriptAndComments) {
  const auto t = parse("<div><!-- c --><script>var x = 1;</script></div>");
  bool comment = false, script_text = false;
  for (int id : t.preorder()) {
    const auto& n = t.node(id);
    comment |= n.type == html::NodeType::Comment;
    script_text |= n.type == html::NodeType::Text && n.data == "var x = 1;";
  }
  EXPECT_TRUE(comment);
  EXPECT_TRUE(script_text);
}

// ---------------------------------------------------------------------------

TEST(ContentRoot, PrefersMain) {
  const auto t = select_content_root(parse("<html><body><article>A</article><main>X</main></body></html>"));
  EXPECT_TRUE(t.node(t.root()).is_element("main"));
  EXPECT_EQ(html::text_content(t, t.root()), "X");
}

TEST(ContentRoot, ArticleBeforeBody) {
  const auto t = select_content_root(parse("<body><div><article>A</article></div></body>"));
  EXPECT_TRUE(t.node(t.root()).is_element("article"));
}

TEST(ContentRoot, FallsBackToBody) {
  const auto t = select_content_root(parse("<html><body><p>x</p></body></html>"));
  EXPECT_TRUE(t.node(t.root()).is_element("body"));
}

TEST(ContentRoot, IdentityWithoutLandmarks) {
  const auto in = parse("<div><p>x</p></div>");
  const auto out = select_content_root(in);
  EXPECT_EQ(html::to_html(out), html::to_html(in));
}

TEST(ContentRoot, NeverGrowsTree) {
  const auto corpus = synth::generate_corpus(20, 4, 1);
  for (const auto& p : corpus.pages) {
    const auto t = parse(p.record.html);
    EXPECT_LE(select_content_root(t).reachable_count(), t.reachable_count());
  }
}

// ---------------------------------------------------------------------------

TEST(Prune, RemovesStyle) {
  EXPECT_EQ(html::to_html(prune_tree(parse("<div><style>.a{}</style><p>t</p></div>"))), "<div><p>t</p></div>");
}

TEST(Prune, IdentityWithoutDenylistedTags) {
  const auto t = parse("<div><p>t</p><span>u</span></div>");
  EXPECT_EQ(html::to_html(prune_tree(t)), html::to_html(t));
}

TEST(Prune, ScriptOnlyLeavesEmptyDiv) {
  const auto t = prune_tree(parse("<div><script>x</script></div>"));
  EXPECT_EQ(html::to_html(t), "<div></div>");
  for (int id : t.preorder()) EXPECT_NE(t.node(id).type, html::NodeType::Text);
}

TEST(Prune, HeaderOnlyOutsideArticle) {
  const auto t = prune_tree(parse("<div><header>site</header><article><header>story</header></article></div>"));
  EXPECT_EQ(html::to_html(t), "<div><article><header>story</header></article></div>");
}

TEST(Prune, CustomDenylist) {
  const auto rules = PruneRules::parse("# test rules\nspan\naside@outside-article\n");
  const auto t = prune_tree(parse("<div><span>a</span><aside>b</aside><p>c</p><style>s</style></div>"), rules);
  EXPECT_EQ(html::to_html(t), "<div><p>c</p><style>s</style></div>");
}

TEST(Prune, Idempotent) {
  const auto corpus = synth::generate_corpus(30, 5, 2);
  for (const auto& p : corpus.pages) {
    const auto once = prune_tree(parse(p.record.html));
    EXPECT_EQ(html::to_html(prune_tree(once)), html::to_html(once));
  }
}

// ---------------------------------------------------------------------------

int image_with_src(const html::DomTree& t, int pick) {
  const auto* src = t.node(pick).attr("src");
  return src ? std::stoi(*src) : -1;
}

TEST(MainImage, LargerAreaWins) {
  const auto t = parse("<div><img src=1 width=300 height=200><img src=2 width=640 height=480></div>");
  EXPECT_EQ(image_with_src(t, select_main_image(t)), 2);
}

TEST(MainImage, TieGoesToFirst) {
  const auto t = parse("<div><img src=1 width=100 height=100><img src=2 width=100 height=100></div>");
  EXPECT_EQ(image_with_src(t, select_main_image(t)), 1);
}

TEST(MainImage, UnknownSizeRanksLast) {
  const auto t = parse("<div><img src=1><img src=2 width=10 height=10><img src=3></div>");
  EXPECT_EQ(image_with_src(t, select_main_image(t)), 2);
  const auto u = parse("<div><img src=1><img src=2 width=50%></div>");
  EXPECT_EQ(image_with_src(u, select_main_image(u)), 1);
}

TEST(MainImage, InlineStyleFallback) {
  const auto t = parse(
      "<div><img src=1 width=100 height=100><img src=2 style='width: 400px; height:300px'></div>");
  EXPECT_EQ(image_with_src(t, select_main_image(t)), 2);
}

TEST(MainImage, NoImage) {
  const auto t = parse("<div><p>text</p></div>");
  try {
    select_main_image(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoImage);
  }
}

// ---------------------------------------------------------------------------

TEST(ReferenceText, LongestWins) {
  const auto t = parse("<figure><img alt='a cat' title=''><figcaption>a very sleepy cat on a mat</figcaption></figure>");
  const auto r = extract_reference_text(t, select_main_image(t));
  EXPECT_EQ(r.text, "a very sleepy cat on a mat");
  EXPECT_EQ(r.source, ReferenceSource::Figcaption);
}

TEST(ReferenceText, OnlyAlt) {
  const auto t = parse("<div><img alt='  only   alt '></div>");
  const auto r = extract_reference_text(t, select_main_image(t));
  EXPECT_EQ(r.text, "only alt");
  EXPECT_EQ(r.source, ReferenceSource::Alt);
}

TEST(ReferenceText, TieOrderAltFigcaptionTitle) {
  const auto t = parse("<figure><img alt='abc' title='xyz'><figcaption>def</figcaption></figure>");
  EXPECT_EQ(extract_reference_text(t, select_main_image(t)).source, ReferenceSource::Alt);
  const auto u = parse("<figure><img title='xyz'><figcaption>def</figcaption></figure>");
  EXPECT_EQ(extract_reference_text(u, select_main_image(u)).source, ReferenceSource::Figcaption);
  const auto v = parse("<div><img title='xyz'></div>");
  EXPECT_EQ(extract_reference_text(v, select_main_image(v)).source, ReferenceSource::TitleAttr);
}

TEST(ReferenceText, AllAbsent) {
  const auto t = parse("<div><img src=x></div>");
  try {
    extract_reference_text(t, select_main_image(t));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoReferenceText);
  }
}

// ---------------------------------------------------------------------------

DomGraph graph_of(std::string_view markup) {
  const auto t = prune_tree(select_content_root(parse(markup)));
  const int img = select_main_image(t);
  const auto ref = extract_reference_text(t, img);
  return build_graph(excise_reference(t, img, ref), img, &ref);
}

TEST(BuildGraph, HandCountedExample) {
  const auto g = graph_of("<article><img alt=\"r\"/><p>tt</p></article>");
  ASSERT_EQ(g.nodes.size(), 4u);
  EXPECT_EQ(g.edges.size(), 3u);
  EXPECT_EQ(g.reference_text, "r");
  EXPECT_EQ(g.text_nodes().size(), 1u);
  EXPECT_EQ(g.nodes[0].raw_tag, "article");
  EXPECT_EQ(g.nodes[1].raw_tag, "img");
  EXPECT_TRUE(g.nodes[1].is_main_image);
  EXPECT_EQ(g.nodes[3].text, "tt");
  validate(g);
}

TEST(BuildGraph, ShortTextDropped) {
  const auto g = graph_of("<article><img alt=\"r\"/><p>t</p></article>");
  EXPECT_EQ(g.nodes.size(), 3u);
  EXPECT_TRUE(g.text_nodes().empty());
}

TEST(BuildGraph, TagGroupsFromTable) {
  const auto g = graph_of("<article><h1>head</h1><h2>sub</h2><p>para</p><img alt=r></article>");
  std::map<std::string, int> group;
  for (const auto& n : g.nodes) group[n.raw_tag] = n.tag_group;
  EXPECT_EQ(group["h1"], group["h2"]);
  EXPECT_EQ(group["h1"], static_cast<int>(TagGroup::Header));
  EXPECT_EQ(group["p"], static_cast<int>(TagGroup::Paragraph));
  EXPECT_EQ(group["#text"], static_cast<int>(TagGroup::TextLeaf));
  EXPECT_EQ(static_cast<int>(tag_group_of("blink")), static_cast<int>(TagGroup::Unknown));
}

TEST(BuildGraph, FigcaptionExcised) {
  const auto g = graph_of(
      "<article><figure><img alt='x'><figcaption>the longest caption</figcaption></figure>"
      "<p>body text</p></article>");
  EXPECT_EQ(g.reference_text, "the longest caption");
  for (const auto& n : g.nodes) {
    EXPECT_NE(n.raw_tag, "figcaption");
    if (n.text) EXPECT_NE(*n.text, g.reference_text);
  }
}

TEST(BuildGraph, AltExcisedTitleKept) {
  const std::string markup = "<article><img alt='long alternative text' title='ttl'><p>body</p></article>";
  const auto t = prune_tree(select_content_root(parse(markup)));
  const int img = select_main_image(t);
  const auto ref = extract_reference_text(t, img);
  const auto ex = excise_reference(t, img, ref);
  EXPECT_EQ(ex.node(img).attr("alt"), nullptr);
  ASSERT_NE(ex.node(img).attr("title"), nullptr);
}

// ---------------------------------------------------------------------------

class SynthGraphs : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto corpus = synth::generate_corpus(60, 6, 9);
    graphs_ = new std::vector<DomGraph>();
    for (const auto& p : corpus.pages) graphs_->push_back(preprocess_page(p.record));
  }
  static void TearDownTestSuite() { delete graphs_; }
  static std::vector<DomGraph>* graphs_;
};
std::vector<DomGraph>* SynthGraphs::graphs_ = nullptr;

TEST_F(SynthGraphs, TreeProperty) {
  for (const auto& g : *graphs_) {
    EXPECT_EQ(g.edges.size() + 1, g.nodes.size());
    validate(g);
  }
}

TEST_F(SynthGraphs, ExactlyOneMainImageAndValidGroups) {
  for (const auto& g : *graphs_) {
    int images = 0;
    for (const auto& n : g.nodes) {
      images += n.is_main_image;
      EXPECT_GE(n.tag_group, 0);
      EXPECT_LT(n.tag_group, kTagGroupCount);
      EXPECT_EQ(n.text.has_value(), n.is_text());
      if (n.text) EXPECT_GE(text::codepoint_count(*n.text), 2u);
    }
    EXPECT_EQ(images, 1);
  }
}

TEST_F(SynthGraphs, DistanceIsAMetric) {
  for (std::size_t k = 0; k < 5; ++k) {
    const auto& g = (*graphs_)[k];
    const int n = static_cast<int>(std::min<std::size_t>(g.nodes.size(), 50));
    std::vector<std::vector<int>> d(static_cast<std::size_t>(n));
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) d[static_cast<std::size_t>(a)].push_back(graph_distance(g, a, b));
    }
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        const int ab = d[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
        EXPECT_EQ(ab == 0, a == b);
        EXPECT_EQ(ab, d[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)]);
        for (int c = 0; c < n; ++c) {
          EXPECT_LE(ab, d[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)] +
                            d[static_cast<std::size_t>(c)][static_cast<std::size_t>(b)]);
        }
      }
    }
  }
}

TEST_F(SynthGraphs, Deterministic) {
  const auto corpus = synth::generate_corpus(60, 6, 9);
  for (std::size_t i = 0; i < corpus.pages.size(); ++i) {
    EXPECT_EQ(graph_to_json(preprocess_page(corpus.pages[i].record)).dump(),
              graph_to_json((*graphs_)[i]).dump());
  }
}

TEST_F(SynthGraphs, JsonRoundTrip) {
  std::stringstream ss;
  write_graphs(ss, *graphs_);
  const auto back = read_graphs(ss);
  ASSERT_EQ(back.size(), graphs_->size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(graph_to_json(back[i]).dump(), graph_to_json((*graphs_)[i]).dump());
  }
}

// ---------------------------------------------------------------------------

int naive_distance(const DomGraph& g, int a, int b) {
  // Walk both nodes up to the root and meet at the lowest common ancestor.
  std::vector<int> parent(g.nodes.size(), -1);
  for (const auto& [p, c] : g.edges) parent[static_cast<std::size_t>(c)] = p;
  std::map<int, int> up_a;
  for (int cur = a, k = 0; cur >= 0; cur = parent[static_cast<std::size_t>(cur)], ++k) up_a[cur] = k;
  for (int cur = b, k = 0; cur >= 0; cur = parent[static_cast<std::size_t>(cur)], ++k) {
    if (auto it = up_a.find(cur); it != up_a.end()) return it->second + k;
  }
  return -1;
}

TEST(GraphDistance, Examples) {
  const auto g = graph_of("<article><img alt=r><p>one two</p><p>three</p></article>");
  EXPECT_EQ(graph_distance(g, 2, 2), 0);
  EXPECT_EQ(graph_distance(g, 0, 2), 1);
  EXPECT_EQ(graph_distance(g, 2, 4), 2);  // sibling paragraphs
  EXPECT_EQ(graph_distance(g, 3, 5), 4);
  for (int a = 0; a < static_cast<int>(g.nodes.size()); ++a) {
    for (int b = 0; b < static_cast<int>(g.nodes.size()); ++b) {
      EXPECT_EQ(graph_distance(g, a, b), naive_distance(g, a, b));
    }
  }
}

TEST(GraphDistance, UnknownNode) {
  const auto g = graph_of("<article><img alt=r><p>one</p></article>");
  try {
    graph_distance(g, 0, 99);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownNode);
  }
  EXPECT_THROW(graph_distance(g, -1, 0), Error);
}

// ---------------------------------------------------------------------------

TEST(SiteId, FromUrl) {
  EXPECT_EQ(site_id_from_url("https://www.example.com/a/b"), "example.com");
  EXPECT_EQ(site_id_from_url("http://news.site03.example:8080/x"), "site03.example");
}

TEST(TagGroups, DocsTableMatchesCode) {
  std::ifstream in(std::string(WICE_DOCS_DIR) + "/tag_groups.md");
  ASSERT_TRUE(in) << "docs/tag_groups.md missing";
  std::map<std::string, std::string> doc;
  std::string line;
  while (std::getline(in, line)) {
    // | tag | group |
    if (line.rfind("| `", 0) != 0) continue;
    const auto a = line.find('`') + 1;
    const auto b = line.find('`', a);
    const auto c = line.find('`', b + 1) + 1;
    const auto d = line.find('`', c);
    doc[line.substr(a, b - a)] = line.substr(c, d - c);
  }
  EXPECT_EQ(doc.size(), kTagGroupTable.size());
  for (const auto& e : kTagGroupTable) {
    EXPECT_EQ(doc[std::string(e.tag)], std::string(tag_group_name(e.group))) << e.tag;
  }
  std::set<int> used;
  for (const auto& e : kTagGroupTable) used.insert(static_cast<int>(e.group));
  EXPECT_EQ(used.size() + 2, static_cast<std::size_t>(kTagGroupCount));  // unknown, text
}

}  // namespace
