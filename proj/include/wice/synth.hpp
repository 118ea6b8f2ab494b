#pragma once

// Deterministic synthetic news corpus. Every page has one large image in a
// figure whose figcaption is the reference text, one planted context
// paragraph marked with data-wice-anchor, same-topic body text, off-topic
// distractors and site boilerplate. Each site fixes a template: where the
// context sits structurally, how the image block looks, what boilerplate
// surrounds the article.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "wice/dom_graph.hpp"
#include "wice/error.hpp"
#include "wice/rng.hpp"
#include "wice/text.hpp"

namespace wice::synth {

enum class Layout { CaptionAdjacent, CaptionFar, BoilerplateHeavy };

inline std::string_view to_string(Layout l) {
  switch (l) {
    case Layout::CaptionAdjacent: return "caption-adjacent";
    case Layout::CaptionFar: return "caption-far";
    case Layout::BoilerplateHeavy: return "boilerplate-heavy";
  }
  return "caption-far";
}

/// Structural position of the planted context.
enum class Slot { MediaBlock, Blockquote, Section, Emphasis, AsideBox, ListItem, TableCell, NestedSpan };
inline constexpr int kSlotCount = 8;

struct TemplateSpec {
  std::string template_id;
  std::string site_id;
  std::string site_name;
  Layout layout = Layout::CaptionFar;
  Slot slot = Slot::Blockquote;
  int body_min = 3, body_max = 6;   // same-topic paragraphs
  int distractor_min = 1, distractor_max = 3;
  int wrapper_depth = 0;            // extra divs around the article body
  bool credit_line = true;          // "Photo: ..." inside the figure
  bool style_dimensions = false;    // main image size via inline style
  bool figure_first = true;         // figure before the first body paragraph
  double decoy_rate = 0.25;         // extra off-topic block in the context slot
  std::string agency;
  std::string newsletter;
  std::vector<std::string> nav;
  std::uint64_t seed = 0;
};

struct GeneratedPage {
  PageRecord record;
  std::string anchor;  // data-wice-anchor value of the planted context
  std::string topic;
};

// --------------------------------------------------------------------------
// Word pools

struct Topic {
  std::string_view name;
  std::string_view words;
};

inline constexpr std::array<Topic, 14> kTopics{{
    {"politics", "parliament senator election ballot coalition minister cabinet legislation vote "
                 "campaign governor referendum opposition policy debate lawmakers constitution "
                 "delegates mandate caucus amendment diplomacy treaty summit embassy veto "
                 "chancellor assembly constituency incumbent nominee partisan petition reform"},
    {"economy", "inflation interest rates markets investors shares earnings quarterly revenue "
                "profits bank lending mortgage unemployment wages exports tariffs currency bonds "
                "dividend recession growth stocks retailers consumers spending deficit budget "
                "treasury commodities pension insurers merger acquisition"},
    {"sports", "striker goalkeeper championship tournament league playoff coach stadium "
               "midfielder quarterback touchdown penalty referee semifinal trophy season roster "
               "marathon sprinter relay medal podium innings wicket batsman pitcher rebound "
               "dribble overtime transfer derby"},
    {"weather", "storm hurricane rainfall flooding forecast meteorologists temperatures heatwave "
                "drought snowfall blizzard gusts tornado humidity frost thunderstorms monsoon "
                "evacuation levee precipitation cyclone hail visibility coastline barometric "
                "warnings downpour sleet typhoon landfall"},
    {"technology", "software startup smartphone processor silicon algorithm developers cloud "
                   "servers encryption cybersecurity hackers broadband satellite semiconductor "
                   "robotics automation gadget firmware browser database platform chipmaker "
                   "bandwidth quantum prototype wearable headset"},
    {"health", "hospital patients vaccine doctors nurses clinic diagnosis treatment surgery "
               "infection outbreak epidemic therapy prescription symptoms pharmacy dementia "
               "diabetes cardiology oncology immunization antibiotics pediatric wellness "
               "nutrition paramedics ambulance transplant"},
    {"science", "researchers laboratory experiment telescope particle physicists molecules "
                "fossils genome chemistry biology microscope specimens hypothesis neutrons "
                "archaeologists excavation glacier volcano seismic asteroid observatory "
                "enzyme protein isotopes peer journal"},
    {"culture", "museum gallery exhibition painter sculpture orchestra theatre premiere novelist "
                "festival curator masterpiece ballet opera playwright choreographer "
                "manuscript poetry canvas portrait symphony repertoire auction heritage "
                "cinema filmmaker screenplay documentary"},
    {"travel", "airline passengers airport flights tourists resort itinerary cruise hotel "
               "luggage boarding destination backpackers railway ferry sightseeing passport "
               "visa beaches hostel excursion landmarks guidebook souvenir departures layover "
               "terminal vacation lodging"},
    {"food", "chef restaurant recipe kitchen bakery harvest vineyard menu cuisine ingredients "
             "pastry dumplings noodles spices butcher cheesemaker farmers orchard tasting "
             "sommelier grill dessert brunch seasonal vegetarian fermentation bistro"},
    {"justice", "prosecutors court judge jury verdict defendant trial attorney sentencing "
                "appeal testimony police detectives investigation arrest charges indictment "
                "witness lawsuit plaintiff settlement parole custody magistrate subpoena "
                "convicted acquitted forensic"},
    {"environment", "climate emissions carbon renewable wind solar turbines wildlife "
                    "conservation forests deforestation biodiversity pollution recycling "
                    "wetlands species habitat reef rangers poaching reforestation sustainability "
                    "methane glaciers wildfire rivers watershed"},
    {"education", "students teachers university campus classroom curriculum tuition "
                  "scholarship graduates lecture professors enrollment exams kindergarten "
                  "principal semester literacy textbooks diploma faculty admissions tutoring "
                  "academy dormitory homework"},
    {"space", "astronauts rocket launch orbit spacecraft lunar mars rover mission payload "
              "capsule booster cosmonaut docking spacewalk telescope galaxy comet meteor "
              "satellites countdown thrusters module probe nebula gravity"},
}};

inline std::vector<std::string_view> topic_words(std::size_t topic) {
  std::vector<std::string_view> out;
  std::string_view s = kTopics.at(topic).words;
  std::size_t start = 0;
  while (start < s.size()) {
    const auto end = s.find(' ', start);
    const auto tok = s.substr(start, end == std::string_view::npos ? s.size() - start : end - start);
    if (!tok.empty()) out.push_back(tok);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

inline constexpr std::array<std::string_view, 24> kFunctionWords{
    "the", "a", "of", "and", "to", "in", "on", "for", "with", "as", "by", "at",
    "from", "after", "while", "over", "this", "that", "their", "its", "was", "were", "has", "said"};

inline constexpr std::array<std::string_view, 16> kSyllables{
    "ka", "lo", "mer", "vin", "dra", "sol", "ten", "bar", "qui", "zel", "ost", "rim", "pan", "dor", "liv", "shu"};

inline std::string make_name(Rng& rng, int parts) {
  std::string s;
  for (int i = 0; i < parts; ++i) s += kSyllables[rng.below(kSyllables.size())];
  s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

namespace detail {

inline std::string_view pick(Rng& rng, const std::vector<std::string_view>& v) {
  return v[rng.below(v.size())];
}

/// Sentence of `n` content words from `pool`, interleaved with function
/// words, capitalized, ending with a period.
inline std::string sentence(Rng& rng, const std::vector<std::string_view>& pool, int n,
                            const std::vector<std::string>& must = {}) {
  std::vector<std::string> words(must.begin(), must.end());
  for (int i = 0; i < n; ++i) words.emplace_back(pick(rng, pool));
  rng.shuffle(words);
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    if (i && rng.below(3) == 0) {
      out += kFunctionWords[rng.below(kFunctionWords.size())];
      out += ' ';
    }
    out += words[i];
  }
  if (!out.empty() && out[0] >= 'a' && out[0] <= 'z') out[0] = static_cast<char>(out[0] - 'a' + 'A');
  out += '.';
  return out;
}

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::vector<std::string_view> without(const std::vector<std::string_view>& pool,
                                             const std::vector<std::string>& drop) {
  std::vector<std::string_view> out;
  for (auto w : pool) {
    if (std::find(drop.begin(), drop.end(), w) == drop.end()) out.push_back(w);
  }
  return out;
}

/// Wraps inner HTML in the structure of `slot`. `heading` is used by
/// slots that carry one.
inline std::string slot_html(Slot slot, const std::string& attrs, const std::string& text,
                             const std::string& heading) {
  switch (slot) {
    case Slot::MediaBlock:
    case Slot::Emphasis: return "<p" + attrs + "><em>" + text + "</em></p>";
    case Slot::Blockquote: return "<blockquote><p" + attrs + ">" + text + "</p></blockquote>";
    case Slot::Section:
      return "<section><h2>" + heading + "</h2><p" + attrs + ">" + text + "</p></section>";
    case Slot::AsideBox:
      return "<aside class=\"box\"><h3>" + heading + "</h3><p" + attrs + ">" + text + "</p></aside>";
    case Slot::ListItem: return "<ul class=\"summary\"><li" + attrs + ">" + text + "</li></ul>";
    case Slot::TableCell:
      return "<table class=\"facts\"><tr><th>" + heading + "</th></tr><tr><td" + attrs + ">" + text +
             "</td></tr></table>";
    case Slot::NestedSpan:
      return "<div class=\"lede\"><div><span" + attrs + ">" + text + "</span></div></div>";
  }
  return "<p" + attrs + ">" + text + "</p>";
}

}  // namespace detail

// --------------------------------------------------------------------------
// Templates

inline TemplateSpec make_template(std::size_t site_index, std::uint64_t corpus_seed) {
  TemplateSpec t;
  t.seed = mix64(corpus_seed ^ mix64(0x5173ULL + site_index));
  Rng rng(t.seed);
  char buf[32];
  std::snprintf(buf, sizeof buf, "site%02zu", site_index);
  t.template_id = std::string(buf) + "-tpl";
  t.site_name = make_name(rng, 2) + " " +
                std::string(std::array<std::string_view, 6>{"Herald", "Daily", "Times", "Post", "Gazette",
                                                            "Observer"}[rng.below(6)]);
  t.site_id = std::string(buf) + ".example";
  t.slot = static_cast<Slot>(rng.below(kSlotCount));
  t.layout = t.slot == Slot::MediaBlock ? Layout::CaptionAdjacent
                                        : (rng.below(2) ? Layout::CaptionFar : Layout::BoilerplateHeavy);
  t.body_min = 2 + static_cast<int>(rng.below(2));
  t.body_max = t.body_min + 2 + static_cast<int>(rng.below(3));
  t.distractor_min = 1;
  t.distractor_max = t.layout == Layout::BoilerplateHeavy ? 4 : 2;
  t.wrapper_depth = static_cast<int>(rng.below(3));
  t.credit_line = t.layout != Layout::CaptionAdjacent;
  t.style_dimensions = rng.below(3) == 0;
  t.figure_first = rng.below(4) != 0;
  t.agency = make_name(rng, 2) + " Images";
  t.newsletter = "Sign up for the " + t.site_name + " morning briefing delivered to your inbox";
  for (int i = 0; i < 5; ++i) t.nav.push_back(make_name(rng, 2));
  return t;
}

// --------------------------------------------------------------------------
// Pages

/// Pure function of (spec, topic index, page id, seed).
inline GeneratedPage generate_page(const TemplateSpec& spec, std::size_t topic,
                                   const std::string& page_id, std::uint64_t seed) {
  Rng rng(seed);
  const auto pool = topic_words(topic);
  auto other_topic = [&] {
    std::size_t t = rng.below(kTopics.size() - 1);
    return t >= topic ? t + 1 : t;
  };

  // Planted facts shared by caption and context.
  std::vector<std::string> keys;
  while (keys.size() < 4) {
    std::string w(detail::pick(rng, pool));
    if (std::find(keys.begin(), keys.end(), w) == keys.end()) keys.push_back(w);
  }
  const std::string place = make_name(rng, 2 + static_cast<int>(rng.below(2)));
  const std::string person = make_name(rng, 2) + " " + make_name(rng, 3);
  const auto rest = detail::without(pool, keys);

  std::vector<std::string> caption_words = keys;
  caption_words.push_back(place);
  caption_words.push_back(person);
  const std::string caption = detail::sentence(rng, rest, 1 + static_cast<int>(rng.below(2)), caption_words);
  std::vector<std::string> context_words = keys;
  context_words.push_back(place);
  context_words.push_back(person);
  const std::string context = detail::sentence(rng, rest, 5 + static_cast<int>(rng.below(5)), context_words);
  const std::string headline = detail::sentence(rng, rest, 5 + static_cast<int>(rng.below(3)));
  const std::string heading = detail::sentence(rng, rest, 2);

  const int n_body = spec.body_min + static_cast<int>(rng.below(static_cast<std::size_t>(spec.body_max - spec.body_min + 1)));
  std::vector<std::string> body;
  for (int i = 0; i < n_body; ++i) body.push_back(detail::sentence(rng, rest, 8 + static_cast<int>(rng.below(8))));
  const int n_distract =
      spec.distractor_min + static_cast<int>(rng.below(static_cast<std::size_t>(spec.distractor_max - spec.distractor_min + 1)));
  std::vector<std::string> distractors;
  for (int i = 0; i < n_distract; ++i) {
    const auto other = topic_words(other_topic());
    distractors.push_back(detail::sentence(rng, other, 8 + static_cast<int>(rng.below(8))));
  }
  const bool decoy = rng.uniform() < spec.decoy_rate;
  std::string decoy_text;
  if (decoy) decoy_text = detail::sentence(rng, topic_words(other_topic()), 8 + static_cast<int>(rng.below(5)));

  const std::string anchor = page_id + "-ctx";
  const std::string anchor_attr = " data-wice-anchor=\"" + anchor + "\"";
  using detail::escape;

  // Image block.
  const int widths[4] = {640, 800, 960, 1200};
  const int w = widths[rng.below(4)];
  const int h = w * 9 / 16;
  std::string img = "<img src=\"/img/" + page_id + ".jpg\" alt=\"" + escape(place) + "\"";
  if (spec.style_dimensions) {
    img += " style=\"width: " + std::to_string(w) + "px; height: " + std::to_string(h) + "px\"";
  } else {
    img += " width=\"" + std::to_string(w) + "\" height=\"" + std::to_string(h) + "\"";
  }
  img += ">";
  std::string figure = "<figure>" + img + "<figcaption>" + escape(caption) + "</figcaption>";
  if (spec.credit_line) figure += "<span class=\"credit\">Photo: " + escape(spec.agency) + "</span>";
  figure += "</figure>";

  const std::string context_html = detail::slot_html(spec.slot, anchor_attr, escape(context), escape(heading));
  std::string media;
  if (spec.slot == Slot::MediaBlock) {
    media = "<div class=\"media\">" + figure + context_html + "</div>";
  } else {
    media = figure;
  }

  // Article body: figure, body paragraphs, the context block at a random
  // position among them, distractors and the optional decoy.
  std::vector<std::string> blocks;
  for (const auto& b : body) blocks.push_back("<p>" + escape(b) + "</p>");
  if (spec.slot != Slot::MediaBlock) {
    const auto pos = 1 + rng.below(blocks.size());
    blocks.insert(blocks.begin() + static_cast<std::ptrdiff_t>(pos), context_html);
  }
  for (const auto& d : distractors) {
    const auto pos = rng.below(blocks.size() + 1);
    blocks.insert(blocks.begin() + static_cast<std::ptrdiff_t>(pos), "<p>" + escape(d) + "</p>");
  }
  if (decoy) {
    const auto slot = spec.slot == Slot::MediaBlock ? Slot::Emphasis : spec.slot;
    const auto pos = rng.below(blocks.size() + 1);
    blocks.insert(blocks.begin() + static_cast<std::ptrdiff_t>(pos),
                  detail::slot_html(slot, "", escape(decoy_text), escape(make_name(rng, 3))));
  }
  if (spec.figure_first) {
    blocks.insert(blocks.begin(), media);
  } else {
    blocks.insert(blocks.begin() + 1, media);
  }

  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
       << "<title>" << escape(headline) << " | " << escape(spec.site_name) << "</title>\n"
       << "<link rel=\"stylesheet\" href=\"/static/site.css\">\n"
       << "<style>.credit{font-size:small}</style>\n"
       << "<script>window.dataLayer=[];</script>\n</head>\n<body>\n"
       << "<header><img src=\"/static/logo.png\" width=\"180\" height=\"40\" alt=\"" << escape(spec.site_name)
       << " logo\"><nav><ul>";
  for (const auto& n : spec.nav) html << "<li><a href=\"/" << n << "\">" << n << "</a></li>";
  html << "</ul></nav></header>\n<main>\n";
  for (int i = 0; i < spec.wrapper_depth; ++i) html << "<div class=\"wrap" << i << "\">";
  html << "<article>\n<h1>" << escape(headline) << "</h1>\n"
       << "<div class=\"byline\">By " << escape(make_name(rng, 2) + " " + make_name(rng, 2))
       << " <time datetime=\"2024-05-0" << 1 + rng.below(9) << "\">May " << 1 + rng.below(28)
       << ", 2024</time></div>\n";
  for (const auto& b : blocks) html << b << '\n';
  html << "<div class=\"share\"><button>Share</button><img src=\"/static/fb.png\" width=\"24\" "
          "height=\"24\" alt=\"share\"></div>\n</article>";
  for (int i = 0; i < spec.wrapper_depth; ++i) html << "</div>";
  html << "\n<aside class=\"related\"><h3>Related stories</h3><ul>";
  const int related = spec.layout == Layout::BoilerplateHeavy ? 5 : 2;
  for (int i = 0; i < related; ++i) {
    const auto other = topic_words(other_topic());
    html << "<li><a href=\"/story/" << rng.below(100000) << "\">"
         << escape(detail::sentence(rng, other, 5)) << "</a></li>";
  }
  html << "</ul><img src=\"/ads/banner.gif\" width=\"300\" height=\"250\" alt=\"advertisement\">";
  if (spec.layout == Layout::BoilerplateHeavy) {
    html << "<div class=\"newsletter\"><p>" << escape(spec.newsletter) << "</p><form><input "
            "type=\"email\"><button>Subscribe</button></form></div>"
         << "<div class=\"comments\"><p>" << rng.below(400) << " comments on this story</p></div>";
  }
  html << "</aside>\n</main>\n<footer><p>&copy; 2024 " << escape(spec.site_name)
       << ". All rights reserved.</p></footer>\n<script src=\"/static/app.js\"></script>\n</body>\n</html>\n";

  GeneratedPage page;
  page.record.page_id = page_id;
  page.record.site_id = spec.site_id;
  page.record.url = "https://www." + spec.site_id + "/2024/" + page_id + ".html";
  page.record.html = html.str();
  page.anchor = anchor;
  page.topic = std::string(kTopics[topic].name);
  return page;
}

struct Corpus {
  std::vector<TemplateSpec> templates;
  std::vector<GeneratedPage> pages;
};

inline std::string page_id_for(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "p%05zu", i);
  return buf;
}

/// Pages are assigned to sites round-robin; topics and page seeds derive
/// from the corpus seed.
inline Corpus generate_corpus(std::size_t n_pages, std::size_t n_sites, std::uint64_t seed) {
  if (n_sites == 0 || n_pages < n_sites) {
    throw Error(ErrorCode::InvalidArgument, "need n_pages >= n_sites >= 1");
  }
  Corpus c;
  for (std::size_t s = 0; s < n_sites; ++s) c.templates.push_back(make_template(s, seed));
  for (std::size_t i = 0; i < n_pages; ++i) {
    const std::uint64_t page_seed = mix64(seed ^ mix64(0xC0FFEEULL + i));
    Rng rng(page_seed);
    const auto topic = rng.below(kTopics.size());
    c.pages.push_back(generate_page(c.templates[i % n_sites], topic, page_id_for(i), rng.next_u64()));
  }
  return c;
}

// --------------------------------------------------------------------------
// Files

/// Manifest line: page_id \t site_id \t url.
inline std::string manifest_line(const PageRecord& r) {
  return r.page_id + '\t' + r.site_id + '\t' + r.url;
}

inline std::vector<PageRecord> parse_manifest(std::istream& in) {
  std::vector<PageRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = text::split(line, '\t');
    if (f.size() < 3) {
      throw Error(ErrorCode::BadFormat, "manifest line " + std::to_string(line_no) + " needs 3 fields");
    }
    PageRecord r;
    r.page_id = std::string(f[0]);
    r.site_id = std::string(f[1]);
    r.url = std::string(f[2]);
    if (f.size() > 3) r.language_hint = std::string(f[3]);
    out.push_back(std::move(r));
  }
  return out;
}

/// Sidecar line: page_id \t anchor.
inline std::map<std::string, std::string> parse_sidecar(std::istream& in) {
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = text::split(line, '\t');
    if (f.size() != 2) throw Error(ErrorCode::BadFormat, "sidecar line '" + line + "'");
    out.emplace(std::string(f[0]), std::string(f[1]));
  }
  return out;
}

/// First text node under the element carrying `anchor`, or -1.
inline int anchored_text_node(const DomGraph& g, const std::string& anchor) {
  int holder = -1;
  for (const auto& n : g.nodes) {
    if (n.anchor && *n.anchor == anchor) {
      holder = n.node_id;
      break;
    }
  }
  if (holder < 0) return -1;
  std::vector<std::vector<int>> children(g.nodes.size());
  for (const auto& [p, c] : g.edges) children[static_cast<std::size_t>(p)].push_back(c);
  std::vector<int> stack{holder};
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    if (g.nodes[static_cast<std::size_t>(cur)].is_text()) return cur;
    const auto& ch = children[static_cast<std::size_t>(cur)];
    for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
  }
  return -1;
}

}  // namespace wice::synth
