#pragma once

// Line-delimited JSON graph file: one DomGraph per line. This is the
// contract between preprocessing and training.
//
//   {"page_id":..., "reference_text":..., "reference_source":"alt|figcaption|title-attr",
//    "nodes":[{"node_id":0,"raw_tag":"article","tag_group":15,"kind":"element",
//              "is_main_image":false}, ...],
//    "edges":[[0,1], ...], "site_id":..., "title":...}

#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wice/dom_graph.hpp"
#include "wice/error.hpp"

namespace wice {

using ordered_json = nlohmann::ordered_json;

inline ordered_json graph_to_json(const DomGraph& g) {
  ordered_json j;
  j["page_id"] = g.page_id;
  j["reference_text"] = g.reference_text;
  j["reference_source"] = to_string(g.reference_source);
  auto nodes = ordered_json::array();
  for (const auto& n : g.nodes) {
    ordered_json jn;
    jn["node_id"] = n.node_id;
    jn["raw_tag"] = n.raw_tag;
    jn["tag_group"] = n.tag_group;
    jn["kind"] = to_string(n.kind);
    if (n.text) jn["text"] = *n.text;
    jn["is_main_image"] = n.is_main_image;
    if (n.anchor) jn["anchor"] = *n.anchor;
    nodes.push_back(std::move(jn));
  }
  j["nodes"] = std::move(nodes);
  auto edges = ordered_json::array();
  for (const auto& [p, c] : g.edges) edges.push_back({p, c});
  j["edges"] = std::move(edges);
  j["site_id"] = g.site_id;
  if (g.title) j["title"] = *g.title;
  return j;
}

inline DomGraph graph_from_json(const ordered_json& j) {
  try {
    DomGraph g;
    g.page_id = j.at("page_id").get<std::string>();
    g.reference_text = j.at("reference_text").get<std::string>();
    g.reference_source =
        reference_source_from_string(j.at("reference_source").get<std::string>());
    for (const auto& jn : j.at("nodes")) {
      DomNode n;
      n.node_id = jn.at("node_id").get<int>();
      n.raw_tag = jn.at("raw_tag").get<std::string>();
      n.tag_group = jn.at("tag_group").get<int>();
      n.kind = node_kind_from_string(jn.at("kind").get<std::string>());
      if (jn.contains("text")) n.text = jn["text"].get<std::string>();
      n.is_main_image = jn.at("is_main_image").get<bool>();
      if (jn.contains("anchor")) n.anchor = jn["anchor"].get<std::string>();
      g.nodes.push_back(std::move(n));
    }
    for (const auto& je : j.at("edges")) {
      g.edges.emplace_back(je.at(0).get<int>(), je.at(1).get<int>());
    }
    if (j.contains("site_id")) g.site_id = j["site_id"].get<std::string>();
    if (j.contains("title")) g.title = j["title"].get<std::string>();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("graph record: ") + e.what());
  }
}

inline void write_graphs(std::ostream& out, const std::vector<DomGraph>& graphs) {
  for (const auto& g : graphs) out << graph_to_json(g).dump() << '\n';
}

inline std::vector<DomGraph> read_graphs(std::istream& in) {
  std::vector<DomGraph> graphs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::BadFormat,
                  "graph file line " + std::to_string(line_no) + ": " + e.what());
    }
    auto g = graph_from_json(j);
    validate(g, false);
    graphs.push_back(std::move(g));
  }
  return graphs;
}

inline std::vector<DomGraph> load_graphs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingPrerequisite, "graph file " + path);
  return read_graphs(in);
}

}  // namespace wice
