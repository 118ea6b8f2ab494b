#pragma once

// Fixed mapping from HTML tag names to 22 semantic node-type groups. The
// table is versioned; docs/tag_groups.md mirrors it and a test keeps the two
// in sync.

#include <array>
#include <string_view>

namespace wice {

inline constexpr int kTagGroupCount = 22;
inline constexpr int kTagGroupVersion = 1;

enum class TagGroup : int {
  Header = 0,
  Paragraph = 1,
  List = 2,
  ListItem = 3,
  Table = 4,
  Link = 5,
  Inline = 6,
  Figure = 7,
  Figcaption = 8,
  Image = 9,
  Media = 10,
  Quote = 11,
  Code = 12,
  Division = 13,
  Span = 14,
  Sectioning = 15,
  Aside = 16,
  Time = 17,
  Label = 18,
  Interactive = 19,
  Unknown = 20,
  TextLeaf = 21,
};

inline constexpr std::array<std::string_view, kTagGroupCount> kTagGroupNames = {
    "header",  "paragraph",  "list",  "list_item", "table",     "link",
    "inline",  "figure",     "figcaption", "image", "media",    "quote",
    "code",    "division",   "span",  "sectioning", "aside",    "time",
    "label",   "interactive", "unknown", "text"};

struct TagGroupEntry {
  std::string_view tag;
  TagGroup group;
};

inline constexpr std::array<TagGroupEntry, 103> kTagGroupTable = {{
    {"h1", TagGroup::Header}, {"h2", TagGroup::Header}, {"h3", TagGroup::Header},
    {"h4", TagGroup::Header}, {"h5", TagGroup::Header}, {"h6", TagGroup::Header},
    {"hgroup", TagGroup::Header},
    {"p", TagGroup::Paragraph},
    {"ul", TagGroup::List}, {"ol", TagGroup::List}, {"dl", TagGroup::List},
    {"menu", TagGroup::List}, {"dir", TagGroup::List},
    {"li", TagGroup::ListItem}, {"dt", TagGroup::ListItem}, {"dd", TagGroup::ListItem},
    {"table", TagGroup::Table}, {"thead", TagGroup::Table}, {"tbody", TagGroup::Table},
    {"tfoot", TagGroup::Table}, {"tr", TagGroup::Table}, {"td", TagGroup::Table},
    {"th", TagGroup::Table}, {"caption", TagGroup::Table}, {"colgroup", TagGroup::Table},
    {"col", TagGroup::Table},
    {"a", TagGroup::Link},
    {"b", TagGroup::Inline}, {"i", TagGroup::Inline}, {"em", TagGroup::Inline},
    {"strong", TagGroup::Inline}, {"u", TagGroup::Inline}, {"s", TagGroup::Inline},
    {"small", TagGroup::Inline}, {"mark", TagGroup::Inline}, {"sub", TagGroup::Inline},
    {"sup", TagGroup::Inline}, {"abbr", TagGroup::Inline}, {"dfn", TagGroup::Inline},
    {"var", TagGroup::Inline}, {"kbd", TagGroup::Inline}, {"samp", TagGroup::Inline},
    {"br", TagGroup::Inline}, {"wbr", TagGroup::Inline}, {"font", TagGroup::Inline},
    {"big", TagGroup::Inline}, {"del", TagGroup::Inline}, {"ins", TagGroup::Inline},
    {"cite", TagGroup::Inline}, {"strike", TagGroup::Inline}, {"tt", TagGroup::Inline},
    {"bdi", TagGroup::Inline}, {"bdo", TagGroup::Inline},
    {"figure", TagGroup::Figure},
    {"figcaption", TagGroup::Figcaption},
    {"img", TagGroup::Image}, {"picture", TagGroup::Image},
    {"video", TagGroup::Media}, {"audio", TagGroup::Media}, {"source", TagGroup::Media},
    {"track", TagGroup::Media}, {"canvas", TagGroup::Media}, {"object", TagGroup::Media},
    {"embed", TagGroup::Media}, {"map", TagGroup::Media}, {"area", TagGroup::Media},
    {"svg", TagGroup::Media}, {"iframe", TagGroup::Media},
    {"blockquote", TagGroup::Quote}, {"q", TagGroup::Quote},
    {"pre", TagGroup::Code}, {"code", TagGroup::Code},
    {"div", TagGroup::Division}, {"center", TagGroup::Division},
    {"span", TagGroup::Span},
    {"article", TagGroup::Sectioning}, {"section", TagGroup::Sectioning},
    {"main", TagGroup::Sectioning}, {"body", TagGroup::Sectioning},
    {"html", TagGroup::Sectioning}, {"header", TagGroup::Sectioning},
    {"footer", TagGroup::Sectioning}, {"nav", TagGroup::Sectioning},
    {"aside", TagGroup::Aside},
    {"time", TagGroup::Time}, {"data", TagGroup::Time},
    {"label", TagGroup::Label}, {"legend", TagGroup::Label}, {"fieldset", TagGroup::Label},
    {"address", TagGroup::Label}, {"output", TagGroup::Label}, {"meter", TagGroup::Label},
    {"progress", TagGroup::Label},
    {"button", TagGroup::Interactive}, {"input", TagGroup::Interactive},
    {"select", TagGroup::Interactive}, {"textarea", TagGroup::Interactive},
    {"option", TagGroup::Interactive}, {"optgroup", TagGroup::Interactive},
    {"form", TagGroup::Interactive}, {"details", TagGroup::Interactive},
    {"summary", TagGroup::Interactive}, {"dialog", TagGroup::Interactive},
}};

/// Group for an element tag (lowercase). Text nodes use TagGroup::TextLeaf.
constexpr TagGroup tag_group_of(std::string_view tag) {
  for (const auto& e : kTagGroupTable) {
    if (e.tag == tag) return e.group;
  }
  return TagGroup::Unknown;
}

constexpr std::string_view tag_group_name(TagGroup g) {
  return kTagGroupNames[static_cast<std::size_t>(g)];
}

}  // namespace wice
