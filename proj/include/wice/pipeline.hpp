#pragma once

// Pipeline stages behind the CLI: synth -> preprocess -> embed -> train ->
// evaluate, plus single-page extraction. Each artifact is written
// atomically and gets a FILE.meta.json sidecar holding the config hash of
// the stage that produced it and the SHA-256 of every input artifact, so
// later stages can refuse inputs from a different lineage.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "wice/checkpoint.hpp"
#include "wice/dom_graph.hpp"
#include "wice/error.hpp"
#include "wice/featurize.hpp"
#include "wice/graph_io.hpp"
#include "wice/synth.hpp"
#include "wice/training.hpp"
#include "wice/wice_eval.hpp"

namespace wice::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// --------------------------------------------------------------------------
// Configuration

struct RunConfig {
  std::uint64_t seed = 0;
  // synth
  std::size_t pages = 200;
  std::size_t sites = 10;
  // preprocess
  std::string denylist;  // empty: built-in rules
  double error_rate_threshold = 0.5;
  // embed
  std::string provider = "hashed";
  std::size_t dim = 512;
  // train
  std::string arch = "wgcn";
  std::string split = "by_page";
  std::size_t epochs = 60;
  std::size_t patience = 10;
  std::size_t accumulate = 1;
  std::string optimizer = "adam";
  double learning_rate = 1e-3;
  double weight_decay = 0.0;
  std::vector<std::size_t> hidden;
  std::size_t heads = 4;
  std::size_t depth = 8;
  std::string readout = "image";
  std::string weight_mode = "softmax";
  // evaluate
  std::string methods = "wgcn,blind,distance,title,text_after_image,random,oracle";
  std::string partition = "test";
  double threshold = 0.4;
  std::uint64_t random_seed = 0;

  json to_json() const {
    json j;
    j["seed"] = seed;
    j["pages"] = pages;
    j["sites"] = sites;
    j["denylist"] = denylist;
    j["error_rate_threshold"] = error_rate_threshold;
    j["provider"] = provider;
    j["dim"] = dim;
    j["arch"] = arch;
    j["split"] = split;
    j["epochs"] = epochs;
    j["patience"] = patience;
    j["accumulate"] = accumulate;
    j["optimizer"] = optimizer;
    j["learning_rate"] = learning_rate;
    j["weight_decay"] = weight_decay;
    j["hidden"] = hidden;
    j["heads"] = heads;
    j["depth"] = depth;
    j["readout"] = readout;
    j["weight_mode"] = weight_mode;
    j["methods"] = methods;
    j["partition"] = partition;
    j["threshold"] = threshold;
    j["random_seed"] = random_seed;
    return j;
  }

  /// Applies keys from a config file, skipping the ones in `locked`
  /// (options given explicitly on the command line).
  void apply(const json& j, const std::set<std::string>& locked = {}) {
    auto set = [&](const char* key, auto& field) {
      if (!j.contains(key) || locked.count(key)) return;
      try {
        field = j.at(key).get<std::decay_t<decltype(field)>>();
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("config key ") + key + ": " + e.what());
      }
    };
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!to_json().contains(it.key())) {
        throw Error(ErrorCode::InvalidArgument, "unknown config key '" + it.key() + "'");
      }
    }
    set("seed", seed);
    set("pages", pages);
    set("sites", sites);
    set("denylist", denylist);
    set("error_rate_threshold", error_rate_threshold);
    set("provider", provider);
    set("dim", dim);
    set("arch", arch);
    set("split", split);
    set("epochs", epochs);
    set("patience", patience);
    set("accumulate", accumulate);
    set("optimizer", optimizer);
    set("learning_rate", learning_rate);
    set("weight_decay", weight_decay);
    set("hidden", hidden);
    set("heads", heads);
    set("depth", depth);
    set("readout", readout);
    set("weight_mode", weight_mode);
    set("methods", methods);
    set("partition", partition);
    set("threshold", threshold);
    set("random_seed", random_seed);
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.architecture = gnn::architecture_from_string(arch);
    t.epochs = epochs;
    t.patience = patience;
    t.accumulate = accumulate;
    t.optimizer.kind = gnn::optimizer_from_string(optimizer);
    t.optimizer.learning_rate = learning_rate;
    t.optimizer.weight_decay = weight_decay;
    t.seed = seed;
    t.hidden = hidden;
    t.heads = heads;
    t.depth = depth;
    if (readout != "image" && readout != "mean") {
      throw Error(ErrorCode::InvalidArgument, "readout must be image or mean");
    }
    t.readout = readout == "mean" ? gnn::Readout::MeanPool : gnn::Readout::ImageNode;
    if (weight_mode != "softmax" && weight_mode != "raw") {
      throw Error(ErrorCode::InvalidArgument, "weight_mode must be softmax or raw");
    }
    t.weight_mode = weight_mode == "raw" ? gnn::WeightMode::Raw : gnn::WeightMode::Softmax;
    return t;
  }
};

/// Overlays a JSON config file on `base`, keeping the keys in `locked`.
inline RunConfig load_config(const std::string& path, const std::set<std::string>& locked = {},
                             RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingPrerequisite, "config file " + path);
  try {
    base.apply(json::parse(in), locked);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::BadFormat, "config file " + path + ": " + e.what());
  }
  return base;
}

/// SHA-256 of the canonical JSON of the keys a stage depends on.
inline std::string config_hash(const RunConfig& c, const std::vector<std::string>& keys) {
  const json all = c.to_json();
  json sub;
  for (const auto& k : keys) sub[k] = all.at(k);
  return text::sha256_hex(sub.dump());
}

inline const std::vector<std::string>& stage_keys(std::string_view stage) {
  static const std::map<std::string, std::vector<std::string>, std::less<>> keys{
      {"synth", {"seed", "pages", "sites"}},
      {"preprocess", {"denylist"}},
      {"embed", {"provider", "dim", "seed"}},
      {"train",
       {"arch", "split", "seed", "epochs", "patience", "accumulate", "optimizer", "learning_rate",
        "weight_decay", "hidden", "heads", "depth", "readout", "weight_mode"}},
      {"evaluate", {"methods", "partition", "threshold", "random_seed"}},
  };
  return keys.find(stage)->second;
}

// --------------------------------------------------------------------------
// Files, atomic writes, provenance

inline std::string read_file(const std::string& path, std::string_view what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingPrerequisite, std::string(what) + " " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temp file, then renames over the target.
inline void write_atomic(const std::string& path, std::string_view bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::InvalidArgument, "write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

inline std::string meta_path(const std::string& artifact) { return artifact + ".meta.json"; }

struct Meta {
  std::string artifact;  // kind: graphs, embeddings, checkpoint, ...
  std::string config_hash;
  std::string content_sha256;
  std::map<std::string, std::string> inputs;  // role -> sha256
  json config;
  json report;
};

inline void write_meta(const std::string& artifact_path, const Meta& m) {
  json j;
  j["artifact"] = m.artifact;
  j["config_hash"] = m.config_hash;
  j["content_sha256"] = m.content_sha256;
  j["inputs"] = m.inputs;
  j["config"] = m.config;
  j["report"] = m.report;
  write_atomic(meta_path(artifact_path), j.dump(2) + "\n");
}

inline std::optional<Meta> read_meta(const std::string& artifact_path) {
  std::ifstream in(meta_path(artifact_path));
  if (!in) return std::nullopt;
  try {
    const auto j = json::parse(in);
    Meta m;
    m.artifact = j.at("artifact").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.content_sha256 = j.at("content_sha256").get<std::string>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.config = j.value("config", json::object());
    m.report = j.value("report", json::object());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, "meta file for " + artifact_path + ": " + e.what());
  }
}

/// Writes the artifact and its sidecar.
inline void publish(const std::string& path, std::string_view bytes, Meta meta) {
  write_atomic(path, bytes);
  meta.content_sha256 = text::sha256_hex(bytes);
  write_meta(path, meta);
}

/// Checks that `artifact` was produced from an input whose bytes hash to
/// `expected` under `role`. Artifacts without a sidecar (produced by
/// external tools) are accepted.
inline void verify_lineage(const std::string& artifact, const std::string& role, const std::string& expected) {
  const auto meta = read_meta(artifact);
  if (!meta) return;
  const auto it = meta->inputs.find(role);
  if (it == meta->inputs.end()) return;
  if (it->second != expected) {
    throw Error(ErrorCode::ProvenanceMismatch,
                artifact + " was built from a different " + role + " file");
  }
}

/// Checks that the file on disk still matches its own sidecar.
inline void verify_content(const std::string& artifact, std::string_view bytes) {
  const auto meta = read_meta(artifact);
  if (meta && meta->content_sha256 != text::sha256_hex(bytes)) {
    throw Error(ErrorCode::ProvenanceMismatch, artifact + " does not match its meta sidecar");
  }
}

inline void log(std::string_view stage, std::string_view message) {
  std::cerr << "wice " << stage << ": " << message << '\n';
}

// --------------------------------------------------------------------------
// Stage results

struct StageReport {
  std::size_t processed = 0;
  std::map<std::string, std::size_t> failures;  // error code -> count
  double seconds = 0.0;
  json extra = json::object();

  std::size_t failed() const {
    std::size_t n = 0;
    for (const auto& [k, v] : failures) n += v;
    return n;
  }
  double error_rate() const {
    const auto total = processed + failed();
    return total ? static_cast<double>(failed()) / static_cast<double>(total) : 0.0;
  }
  json to_json() const {
    json j;
    j["processed"] = processed;
    j["failures"] = failures;
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    return j;
  }
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// --------------------------------------------------------------------------
// synth

struct CorpusPaths {
  std::string dir;
  std::string manifest() const { return (fs::path(dir) / "manifest.tsv").string(); }
  std::string ground_truth() const { return (fs::path(dir) / "ground_truth.tsv").string(); }
  std::string page(const std::string& id) const { return (fs::path(dir) / (id + ".html")).string(); }
};

inline StageReport run_synth(const RunConfig& c, const std::string& out_dir) {
  Stopwatch sw;
  const auto corpus = synth::generate_corpus(c.pages, c.sites, c.seed);
  CorpusPaths paths{out_dir};
  std::string manifest, truth;
  for (const auto& p : corpus.pages) {
    write_atomic(paths.page(p.record.page_id), p.record.html);
    manifest += synth::manifest_line(p.record) + '\n';
    truth += p.record.page_id + '\t' + p.anchor + '\n';
  }
  json templates = json::array();
  for (const auto& t : corpus.templates) {
    templates.push_back({{"site_id", t.site_id},
                         {"site_name", t.site_name},
                         {"layout", synth::to_string(t.layout)},
                         {"slot", static_cast<int>(t.slot)},
                         {"wrapper_depth", t.wrapper_depth}});
  }
  Meta meta{"manifest", config_hash(c, stage_keys("synth")), "", {}, c.to_json(), {}};
  meta.report["templates"] = templates;
  publish(paths.manifest(), manifest, meta);
  publish(paths.ground_truth(), truth, {"ground_truth", meta.config_hash, "", {}, json::object(), {}});
  StageReport r;
  r.processed = corpus.pages.size();
  r.seconds = sw.seconds();
  return r;
}

// --------------------------------------------------------------------------
// preprocess

inline StageReport run_preprocess(const RunConfig& c, const std::string& corpus_dir,
                                  const std::string& manifest_path, const std::string& out) {
  Stopwatch sw;
  const std::string manifest_bytes = read_file(manifest_path, "manifest");
  std::istringstream ms(manifest_bytes);
  const auto records = synth::parse_manifest(ms);
  if (records.empty()) throw Error(ErrorCode::EmptyCorpus, "manifest " + manifest_path + " lists no pages");
  const PruneRules rules = c.denylist.empty() ? default_prune_rules() : PruneRules::load(c.denylist);
  std::set<std::string> seen;
  std::vector<DomGraph> graphs;
  StageReport r;
  CorpusPaths paths{corpus_dir};
  for (auto rec : records) {
    if (!seen.insert(rec.page_id).second) {
      throw Error(ErrorCode::BadFormat, "duplicate page id " + rec.page_id + " in manifest");
    }
    try {
      rec.html = read_file(paths.page(rec.page_id), "page");
      graphs.push_back(preprocess_page(rec, rules));
    } catch (const Error& e) {
      ++r.failures[std::string(to_string(e.code()))];
    }
  }
  std::ostringstream os;
  write_graphs(os, graphs);
  r.processed = graphs.size();
  r.seconds = sw.seconds();
  Meta meta{"graphs", config_hash(c, stage_keys("preprocess")), "",
            {{"manifest", text::sha256_hex(manifest_bytes)}}, c.to_json(), r.to_json()};
  publish(out, os.str(), meta);
  return r;
}

// --------------------------------------------------------------------------
// embed

/// All texts a graph needs embedded: text nodes, reference, title.
inline std::vector<std::string> graph_texts(const DomGraph& g) {
  std::vector<std::string> out;
  for (const auto& n : g.nodes) {
    if (n.is_text()) out.push_back(*n.text);
  }
  if (!g.reference_text.empty()) out.push_back(g.reference_text);
  if (g.title) out.push_back(*g.title);
  return out;
}

inline std::unique_ptr<EmbeddingProvider> make_provider(const RunConfig& c, const std::string& cache_path) {
  if (c.provider == "hashed") return std::make_unique<HashedProvider>(c.dim, c.seed);
  if (c.provider == "cache") {
    if (cache_path.empty()) throw Error(ErrorCode::InvalidArgument, "--cache is required with provider=cache");
    auto cache = std::make_shared<EmbeddingCache>(EmbeddingCache::load(cache_path));
    if (cache->dim() != c.dim) {
      throw Error(ErrorCode::DimensionMismatch, "cache dim " + std::to_string(cache->dim()) +
                                                    " != configured " + std::to_string(c.dim));
    }
    return std::make_unique<CacheProvider>(std::move(cache));
  }
  throw Error(ErrorCode::InvalidArgument, "unknown provider '" + c.provider + "'");
}

/// Writes an embedding cache covering every text of every graph. Pages
/// whose texts the provider cannot embed are counted as failures.
inline StageReport run_embed(const RunConfig& c, const std::string& graphs_path,
                             const std::string& cache_path, const std::string& out) {
  Stopwatch sw;
  const std::string graph_bytes = read_file(graphs_path, "graph file");
  verify_content(graphs_path, graph_bytes);
  std::istringstream gs(graph_bytes);
  const auto graphs = read_graphs(gs);
  const auto provider = make_provider(c, cache_path);
  EmbeddingCache result(provider->dim(), provider->id());
  StageReport r;
  for (const auto& g : graphs) {
    try {
      std::vector<std::pair<std::string, Vector>> page;
      for (const auto& t : graph_texts(g)) page.emplace_back(t, provider->embed(t));
      for (auto& [t, v] : page) result.put_text(t, std::move(v));
      ++r.processed;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::MissingEmbedding && e.code() != ErrorCode::EmptyText) throw;
      ++r.failures[std::string(to_string(e.code()))];
    }
  }
  r.seconds = sw.seconds();
  r.extra["vectors"] = result.size();
  Meta meta{"embeddings", config_hash(c, stage_keys("embed")), "",
            {{"graphs", text::sha256_hex(graph_bytes)}}, c.to_json(), r.to_json()};
  publish(out, result.to_string(), meta);
  return r;
}

// --------------------------------------------------------------------------
// train / evaluate shared loading

struct LoadedData {
  std::vector<DomGraph> graphs;
  Dataset dataset;
  std::string graphs_sha;
  std::string embeddings_sha;
  std::size_t missing_embeddings = 0;
};

/// Loads graphs and embeddings, checks that the embeddings came from these
/// graphs, and featurizes every page the cache fully covers.
inline std::unique_ptr<LoadedData> load_data(const std::string& graphs_path,
                                             const std::string& embeddings_path) {
  auto d = std::make_unique<LoadedData>();
  const std::string graph_bytes = read_file(graphs_path, "graph file");
  verify_content(graphs_path, graph_bytes);
  const std::string emb_bytes = read_file(embeddings_path, "embeddings");
  verify_content(embeddings_path, emb_bytes);
  d->graphs_sha = text::sha256_hex(graph_bytes);
  d->embeddings_sha = text::sha256_hex(emb_bytes);
  verify_lineage(embeddings_path, "graphs", d->graphs_sha);
  std::istringstream gs(graph_bytes);
  d->graphs = read_graphs(gs);
  std::istringstream es(emb_bytes);
  auto cache = std::make_shared<EmbeddingCache>(EmbeddingCache::read(es));
  CacheProvider provider(cache);
  std::vector<DomGraph> covered;
  for (auto& g : d->graphs) {
    bool ok = true;
    for (const auto& t : graph_texts(g)) {
      if (!cache->find_text(t)) {
        ok = false;
        break;
      }
    }
    if (ok) {
      covered.push_back(std::move(g));
    } else {
      ++d->missing_embeddings;
    }
  }
  d->graphs = std::move(covered);
  d->dataset = build_dataset(d->graphs, provider);
  return d;
}

// --------------------------------------------------------------------------
// train

struct TrainPaths {
  std::string graphs, embeddings, checkpoint, metrics;
  std::string split_out;  // default: checkpoint + ".split.json"
  bool resume = false;
};

inline std::string last_checkpoint_path(const std::string& ckpt) { return ckpt + ".last"; }

inline StageReport run_train(const RunConfig& c, const TrainPaths& p) {
  Stopwatch sw;
  const auto data = load_data(p.graphs, p.embeddings);
  const auto& ds = data->dataset;
  if (ds.dim != c.dim) {
    throw Error(ErrorCode::DimensionMismatch,
                "embeddings have dim " + std::to_string(ds.dim) + ", config says " + std::to_string(c.dim));
  }
  std::vector<SplitItem> items;
  for (const auto& g : data->graphs) items.push_back({g.page_id, g.site_id});
  const auto split = split_dataset(items, {split_mode_from_string(c.split), {5, 2, 3}, c.seed});
  const auto tcfg = c.train_config();
  const std::string hash = config_hash(c, stage_keys("train"));

  std::optional<ResumeState> resume;
  if (p.resume && fs::exists(last_checkpoint_path(p.checkpoint)) && fs::exists(p.checkpoint)) {
    ResumeState st{gnn::load_checkpoint(last_checkpoint_path(p.checkpoint)),
                   gnn::load_checkpoint(p.checkpoint)};
    if (st.last.config_hash != hash) {
      throw Error(ErrorCode::ProvenanceMismatch, "cannot resume: checkpoint was trained with another config");
    }
    resume = std::move(st);
  }
  std::vector<EpochMetric> prior;
  if (resume && fs::exists(p.metrics)) {
    std::ifstream in(p.metrics);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = json::parse(line);
      prior.push_back({j.at("epoch").get<std::size_t>(), j.at("split").get<std::string>(),
                       j.at("mean_loss").get<double>()});
    }
  }

  auto result = train(select(ds, split.train), select(ds, split.valid), ds.dim, tcfg, resume,
                      [](const EpochMetric& m) {
                        log("train", "epoch " + std::to_string(m.epoch) + " " + m.split + " " +
                                         text::format_double(m.mean_loss));
                      });
  for (auto* ck : {&result.best, &result.last}) {
    ck->config_hash = hash;
    ck->provider_id = ds.provider_id;
  }
  prior.insert(prior.end(), result.metrics.begin(), result.metrics.end());
  std::ostringstream ms;
  write_metrics(ms, prior);

  StageReport r;
  r.processed = ds.examples.size();
  if (data->missing_embeddings) r.failures["MissingEmbedding"] = data->missing_embeddings;
  if (!ds.no_text_nodes.empty()) r.failures["NoTextNodes"] = ds.no_text_nodes.size();
  r.extra["best_epoch"] = result.best_epoch;
  r.extra["stopped_early"] = result.stopped_early;
  r.extra["train_pages"] = split.train.size();
  r.extra["valid_pages"] = split.valid.size();
  r.extra["test_pages"] = split.test.size();
  r.seconds = sw.seconds();

  const std::string split_path = p.split_out.empty() ? p.checkpoint + ".split.json" : p.split_out;
  const std::map<std::string, std::string> inputs{{"graphs", data->graphs_sha},
                                                  {"embeddings", data->embeddings_sha}};
  publish(split_path, split_to_json(split).dump() + "\n",
          {"split", hash, "", inputs, c.to_json(), json::object()});
  const std::string best_bytes = gnn::checkpoint_bytes(result.best);
  publish(p.checkpoint, best_bytes, {"checkpoint", hash, "", inputs, c.to_json(), r.to_json()});
  publish(last_checkpoint_path(p.checkpoint), gnn::checkpoint_bytes(result.last),
          {"checkpoint", hash, "", inputs, c.to_json(), r.to_json()});
  publish(p.metrics, ms.str(), {"metrics", hash, "", inputs, c.to_json(), json::object()});
  return r;
}

// --------------------------------------------------------------------------
// evaluate

struct EvaluatePaths {
  std::string graphs, embeddings, checkpoint, split_file, out;
};

inline std::vector<Method> parse_methods(const std::string& list) {
  std::vector<Method> out;
  for (auto part : text::split(list, ',')) {
    const auto name = text::trim(part);
    if (!name.empty()) out.push_back(method_from_string(name));
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no methods given");
  return out;
}

struct EvaluateOutput {
  StageReport report;
  std::vector<WiceEvaluation> evaluations;
  json summary;
};

inline EvaluateOutput run_evaluate(const RunConfig& c, const EvaluatePaths& p) {
  Stopwatch sw;
  const auto methods = parse_methods(c.methods);
  const bool need_model =
      std::any_of(methods.begin(), methods.end(), [](Method m) { return needs_model(m); });
  std::optional<gnn::Checkpoint> ck;
  if (need_model) {
    if (p.checkpoint.empty() || !fs::exists(p.checkpoint)) {
      throw Error(ErrorCode::MissingPrerequisite,
                  "checkpoint " + (p.checkpoint.empty() ? std::string("(none given)") : p.checkpoint) +
                      "; run train first");
    }
  }
  const auto data = load_data(p.graphs, p.embeddings);
  if (need_model) {
    const std::string ck_bytes = read_file(p.checkpoint, "checkpoint");
    verify_content(p.checkpoint, ck_bytes);
    verify_lineage(p.checkpoint, "graphs", data->graphs_sha);
    verify_lineage(p.checkpoint, "embeddings", data->embeddings_sha);
    std::istringstream in(ck_bytes);
    ck = gnn::read_checkpoint(in);
    if (ck->provider_id != data->dataset.provider_id) {
      throw Error(ErrorCode::ProviderMismatch,
                  "checkpoint trained on " + ck->provider_id + ", embeddings from " + data->dataset.provider_id);
    }
  }

  std::vector<std::string> ids;
  if (c.partition == "all") {
    for (const auto& g : data->graphs) ids.push_back(g.page_id);
  } else {
    std::string split_file = p.split_file;
    if (split_file.empty() && !p.checkpoint.empty()) split_file = p.checkpoint + ".split.json";
    if (split_file.empty()) {
      throw Error(ErrorCode::MissingPrerequisite, "split file (--split-file) for partition " + c.partition);
    }
    verify_lineage(split_file, "graphs", data->graphs_sha);
    const auto split = load_split(split_file);
    if (c.partition == "train") ids = split.train;
    else if (c.partition == "valid") ids = split.valid;
    else if (c.partition == "test") ids = split.test;
    else throw Error(ErrorCode::InvalidArgument, "partition must be train, valid, test or all");
  }
  const auto pages = select(data->dataset, ids);

  EvaluateOutput out;
  EvalOptions opt{c.random_seed};
  std::vector<WiceResult> all;
  json methods_json = json::array();
  for (auto m : methods) {
    auto ev = evaluate_wice(m, pages, ck ? &ck->model : nullptr, opt);
    auto s = summary_to_json(ev, c.threshold);
    if (ev.mean_regression_loss) {
      try {
        s["pearson_regression_vs_wice"] = correlate_losses(ev.records);
      } catch (const Error&) {
        s["pearson_regression_vs_wice"] = nullptr;
      }
    }
    methods_json.push_back(std::move(s));
    all.insert(all.end(), ev.records.begin(), ev.records.end());
    out.evaluations.push_back(std::move(ev));
  }

  // Oracle dominance over the methods that chose a node.
  std::map<std::string, double> oracle_loss;
  for (const auto& r : all) {
    if (r.method == Method::Oracle) oracle_loss[r.page_id] = r.wice_loss;
  }
  std::size_t violations = 0;
  if (!oracle_loss.empty()) {
    for (const auto& r : all) {
      if (auto it = oracle_loss.find(r.page_id); it != oracle_loss.end() && r.chosen_node &&
                                                   r.wice_loss < it->second) {
        ++violations;
      }
    }
  }

  std::ostringstream rs;
  write_results(rs, all);
  out.report.processed = pages.size();
  if (data->missing_embeddings) out.report.failures["MissingEmbedding"] = data->missing_embeddings;
  out.report.seconds = sw.seconds();
  out.summary["partition"] = c.partition;
  out.summary["pages"] = pages.size();
  out.summary["methods"] = methods_json;
  out.summary["oracle_dominance_violations"] = oracle_loss.empty() ? json() : json(violations);

  std::map<std::string, std::string> inputs{{"graphs", data->graphs_sha},
                                            {"embeddings", data->embeddings_sha}};
  if (ck) inputs["checkpoint"] = text::sha256_hex(gnn::checkpoint_bytes(*ck));
  const std::string hash = config_hash(c, stage_keys("evaluate"));
  publish(p.out, rs.str(), {"results", hash, "", inputs, c.to_json(), out.report.to_json()});
  publish(p.out + ".summary.json", out.summary.dump(2) + "\n",
          {"summary", hash, "", inputs, c.to_json(), json::object()});
  return out;
}

// --------------------------------------------------------------------------
// extract

struct Extraction {
  int node_id = -1;
  double weight = 0.0;
  std::string text;
  std::string method;
};

/// Runs a checkpoint on one HTML page and returns the chosen context.
/// Hashed checkpoints rebuild their provider from the provider id; cache
/// checkpoints need `cache_path`.
inline Extraction run_extract(const std::string& ckpt_path, const std::string& html_path,
                              const std::string& cache_path = "") {
  const auto ck = gnn::load_checkpoint(ckpt_path);
  const std::string html = read_file(html_path, "html page");
  const auto g = preprocess_for_inference(html, fs::path(html_path).stem().string());
  std::unique_ptr<EmbeddingProvider> provider;
  const std::string prefix = "hashed-seed";
  if (ck.provider_id.rfind(prefix, 0) == 0) {
    provider = std::make_unique<HashedProvider>(
        ck.model.config.embedding_dim, text::parse_int<std::uint64_t>(ck.provider_id.substr(prefix.size())));
  } else {
    if (cache_path.empty()) {
      throw Error(ErrorCode::MissingPrerequisite, "embedding cache for provider " + ck.provider_id);
    }
    auto cache = std::make_shared<EmbeddingCache>(EmbeddingCache::load(cache_path));
    if (cache->provider_id() != ck.provider_id) {
      throw Error(ErrorCode::ProviderMismatch, cache->provider_id() + " vs " + ck.provider_id);
    }
    provider = std::make_unique<CacheProvider>(cache);
  }
  if (g.text_nodes().empty()) throw Error(ErrorCode::NoTextNodes, "page has no text nodes");
  EmbeddingMatrix emb;
  emb.dim = provider->dim();
  emb.provider_id = provider->id();
  for (const auto& n : g.nodes) {
    if (n.is_text()) emb.node_vectors.emplace(n.node_id, provider->embed(*n.text));
  }
  const auto input = gnn::make_input(g, assemble_features(g, emb, emb.dim), emb);
  const auto f = gnn::forward(ck.model, input);
  Extraction x;
  x.method = std::string(gnn::to_string(ck.model.config.architecture));
  if (ck.model.config.architecture == gnn::Architecture::WGCN) {
    x.node_id = extract_context(*f.weights);
    x.weight = f.weights->values[x.node_id];
  } else {
    x.node_id = baseline_blind(f.z_hat, emb);
    x.weight = gnn::cosine_similarity(f.z_hat, emb.node_vectors.at(x.node_id));
  }
  x.text = *g.nodes[static_cast<std::size_t>(x.node_id)].text;
  return x;
}

// --------------------------------------------------------------------------
// Exit codes

inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return 1;
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::DegenerateVariance: return 3;
    default: return 2;
  }
}

}  // namespace wice::pipeline
