#pragma once

// Corpus splits, the proxy-task training loop with early stopping, and
// regression evaluation.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "wice/checkpoint.hpp"
#include "wice/dom_graph.hpp"
#include "wice/error.hpp"
#include "wice/featurize.hpp"
#include "wice/gnn.hpp"
#include "wice/optimizer.hpp"
#include "wice/rng.hpp"

namespace wice {

// --------------------------------------------------------------------------
// Splits

enum class SplitMode { ByPage, BySite };

inline std::string_view to_string(SplitMode m) { return m == SplitMode::ByPage ? "by_page" : "by_site"; }

inline SplitMode split_mode_from_string(std::string_view s) {
  if (s == "by_page") return SplitMode::ByPage;
  if (s == "by_site") return SplitMode::BySite;
  throw Error(ErrorCode::InvalidArgument, "unknown split mode '" + std::string(s) + "'");
}

struct SplitSpec {
  SplitMode mode = SplitMode::ByPage;
  std::array<unsigned, 3> ratios{5, 2, 3};
  std::uint64_t seed = 0;
};

struct SplitItem {
  std::string page_id;
  std::string site_id;
};

struct Split {
  SplitMode mode = SplitMode::ByPage;
  std::uint64_t seed = 0;
  std::vector<std::string> train, valid, test;  // sorted by page id
};

/// Number of units going to (train, valid); test takes the remainder.
inline std::pair<std::size_t, std::size_t> split_cuts(std::size_t n, const std::array<unsigned, 3>& r) {
  const std::size_t total = std::size_t{r[0]} + r[1] + r[2];
  return {n * r[0] / total, n * r[1] / total};
}

/// Seeded partition into train/valid/test. Input order does not matter:
/// units are sorted before the shuffle.
inline Split split_dataset(const std::vector<SplitItem>& items, const SplitSpec& spec) {
  if (items.empty()) throw Error(ErrorCode::EmptyCorpus, "nothing to split");
  if (spec.ratios[0] == 0 || spec.ratios[1] == 0 || spec.ratios[2] == 0) {
    throw Error(ErrorCode::InvalidArgument, "split ratios must be positive");
  }
  std::vector<std::string> units;
  if (spec.mode == SplitMode::ByPage) {
    for (const auto& it : items) units.push_back(it.page_id);
  } else {
    std::set<std::string> sites;
    for (const auto& it : items) sites.insert(it.site_id);
    units.assign(sites.begin(), sites.end());
  }
  std::sort(units.begin(), units.end());
  if (std::adjacent_find(units.begin(), units.end()) != units.end() && spec.mode == SplitMode::ByPage) {
    throw Error(ErrorCode::InvalidArgument, "duplicate page ids in split input");
  }
  Rng rng(spec.seed);
  rng.shuffle(units);
  const auto [n_train, n_valid] = split_cuts(units.size(), spec.ratios);
  std::map<std::string, int> part;
  for (std::size_t i = 0; i < units.size(); ++i) {
    part[units[i]] = i < n_train ? 0 : (i < n_train + n_valid ? 1 : 2);
  }
  Split s;
  s.mode = spec.mode;
  s.seed = spec.seed;
  for (const auto& it : items) {
    const int p = part.at(spec.mode == SplitMode::ByPage ? it.page_id : it.site_id);
    (p == 0 ? s.train : p == 1 ? s.valid : s.test).push_back(it.page_id);
  }
  for (auto* v : {&s.train, &s.valid, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

inline nlohmann::ordered_json split_to_json(const Split& s) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(s.mode);
  j["seed"] = s.seed;
  j["train"] = s.train;
  j["valid"] = s.valid;
  j["test"] = s.test;
  return j;
}

inline Split split_from_json(const nlohmann::ordered_json& j) {
  try {
    Split s;
    s.mode = split_mode_from_string(j.at("mode").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train = j.at("train").get<std::vector<std::string>>();
    s.valid = j.at("valid").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("split file: ") + e.what());
  }
}

inline Split load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingPrerequisite, "split file " + path);
  try {
    return split_from_json(nlohmann::ordered_json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::BadFormat, std::string("split file: ") + e.what());
  }
}

// --------------------------------------------------------------------------
// Featurized dataset

struct Example {
  const DomGraph* graph = nullptr;
  EmbeddingMatrix emb;
  gnn::GraphInput input;
};

struct Dataset {
  std::vector<Example> examples;
  std::vector<std::string> no_text_nodes;  // excluded page ids
  std::size_t dim = 0;
  std::string provider_id;

  const Example* find(const std::string& page_id) const {
    for (const auto& e : examples) {
      if (e.graph->page_id == page_id) return &e;
    }
    return nullptr;
  }
};

/// Embeds and featurizes every graph. Pages without text nodes are
/// excluded and listed. `graphs` must outlive the dataset.
inline Dataset build_dataset(const std::vector<DomGraph>& graphs, const EmbeddingProvider& provider) {
  Dataset d;
  d.dim = provider.dim();
  d.provider_id = provider.id();
  for (const auto& g : graphs) {
    if (g.text_nodes().empty()) {
      d.no_text_nodes.push_back(g.page_id);
      continue;
    }
    Example ex;
    ex.graph = &g;
    ex.emb = embed_graph(g, provider);
    ex.input = gnn::make_input(g, assemble_features(g, ex.emb, d.dim), ex.emb);
    d.examples.push_back(std::move(ex));
  }
  return d;
}

/// Examples whose page id is in `ids`, in `ids` order. Unknown ids are
/// skipped (they were excluded upstream).
inline std::vector<const Example*> select(const Dataset& d, const std::vector<std::string>& ids) {
  std::map<std::string_view, const Example*> by_id;
  for (const auto& e : d.examples) by_id.emplace(e.graph->page_id, &e);
  std::vector<const Example*> out;
  for (const auto& id : ids) {
    if (auto it = by_id.find(id); it != by_id.end()) out.push_back(it->second);
  }
  return out;
}

// --------------------------------------------------------------------------
// Regression evaluation

struct RegressionReport {
  double mean_loss = 0.0;
  std::size_t count = 0;
  std::vector<double> per_page;
};

inline RegressionReport evaluate_regression(const gnn::ModelParams& m,
                                            const std::vector<const Example*>& pages) {
  RegressionReport r;
  double sum = 0.0;
  for (const auto* ex : pages) {
    const double l = gnn::cosine_loss(gnn::forward(m, ex->input).z_hat, ex->emb.reference_vector);
    r.per_page.push_back(l);
    sum += l;
  }
  r.count = pages.size();
  if (r.count) r.mean_loss = sum / static_cast<double>(r.count);
  return r;
}

// --------------------------------------------------------------------------
// Training

struct TrainConfig {
  gnn::Architecture architecture = gnn::Architecture::WGCN;
  std::size_t epochs = 60;
  std::size_t patience = 10;
  std::size_t accumulate = 1;  // pages per optimizer step
  gnn::OptimizerConfig optimizer{gnn::OptimizerKind::Adam, 1e-3};
  std::uint64_t seed = 0;
  /// Overrides the architecture defaults when non-empty.
  std::vector<std::size_t> hidden;
  std::size_t heads = 4;
  std::size_t depth = 8;
  gnn::Readout readout = gnn::Readout::ImageNode;
  gnn::WeightMode weight_mode = gnn::WeightMode::Softmax;

  gnn::ModelConfig model_config(std::size_t dim) const {
    auto c = gnn::ModelConfig::defaults(architecture, dim, seed);
    if (!hidden.empty()) c.hidden = hidden;
    c.heads = heads;
    c.depth = depth;
    c.readout = readout;
    c.weight_mode = weight_mode;
    return c;
  }
};

struct EpochMetric {
  std::size_t epoch = 0;
  std::string split;  // "train" or "valid"
  double mean_loss = 0.0;
};

inline nlohmann::ordered_json metric_to_json(const EpochMetric& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["split"] = m.split;
  j["mean_loss"] = m.mean_loss;
  return j;
}

inline void write_metrics(std::ostream& out, const std::vector<EpochMetric>& metrics) {
  for (const auto& m : metrics) out << metric_to_json(m).dump() << '\n';
}

struct TrainResult {
  gnn::Checkpoint best;  // best validation loss
  gnn::Checkpoint last;  // resumable state after the final epoch
  std::vector<EpochMetric> metrics;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

/// Resumable training state: the last checkpoint carries the optimizer
/// state and bookkeeping; `best` is the best-so-far model.
struct ResumeState {
  gnn::Checkpoint last;
  gnn::Checkpoint best;
};

/// Per-epoch page order, a pure function of (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix64(seed ^ mix64(0x9e3779b97f4a7c15ULL + epoch)));
  rng.shuffle(order);
  return order;
}

/// Trains one page per step (or `accumulate` pages), tracks the validation
/// cosine loss each epoch and stops after `patience` epochs without
/// improvement. With an empty validation set the train loss is used.
inline TrainResult train(const std::vector<const Example*>& train_set,
                         const std::vector<const Example*>& valid_set, std::size_t dim,
                         const TrainConfig& config, const std::optional<ResumeState>& resume = {},
                         const std::function<void(const EpochMetric&)>& on_metric = {}) {
  if (train_set.empty()) throw Error(ErrorCode::EmptySet, "training set is empty");
  TrainResult r;
  gnn::ModelParams params;
  gnn::Optimizer opt(config.optimizer);
  std::size_t start_epoch = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs = 0;
  if (resume) {
    params = resume->last.model;
    opt = gnn::Optimizer(resume->last.optimizer, resume->last.optimizer_state);
    start_epoch = resume->last.epoch;
    r.best = resume->best;
    best_loss = text::parse_double(resume->last.extra.at("best_loss"));
    bad_epochs = text::parse_int<std::size_t>(resume->last.extra.at("bad_epochs"));
    r.best_epoch = text::parse_int<std::size_t>(resume->last.extra.at("best_epoch"));
  } else {
    params = gnn::init_params(config.model_config(dim));
    r.best.model = params;
    r.best.optimizer = config.optimizer;
  }

  auto snapshot = [&](std::size_t epoch) {
    gnn::Checkpoint ck;
    ck.model = params;
    ck.optimizer = opt.config();
    ck.optimizer_state = opt.state();
    ck.epoch = epoch;
    return ck;
  };
  auto emit = [&](EpochMetric m) {
    if (on_metric) on_metric(m);
    r.metrics.push_back(std::move(m));
  };

  const std::size_t k = std::max<std::size_t>(1, config.accumulate);
  std::size_t epoch = start_epoch;
  while (epoch < config.epochs && bad_epochs < config.patience) {
    ++epoch;
    double sum = 0.0;
    gnn::Gradients acc;
    std::size_t pending = 0;
    for (const auto idx : epoch_order(train_set.size(), config.seed, epoch)) {
      const auto* ex = train_set[idx];
      auto lg = gnn::loss_and_gradients(params, ex->input, ex->emb.reference_vector);
      sum += lg.loss;
      gnn::accumulate(acc, lg.grads, 1.0 / static_cast<double>(k));
      if (++pending == k) {
        try {
          opt.step(params, acc);
        } catch (const Error& e) {
          throw Error(e.code(), "page " + ex->graph->page_id + ": " + e.what());
        }
        acc.clear();
        pending = 0;
      }
    }
    if (pending) opt.step(params, acc);
    const double train_loss = sum / static_cast<double>(train_set.size());
    emit({epoch, "train", train_loss});
    double select_loss = train_loss;
    if (!valid_set.empty()) {
      select_loss = evaluate_regression(params, valid_set).mean_loss;
      emit({epoch, "valid", select_loss});
    }
    if (select_loss < best_loss) {
      best_loss = select_loss;
      bad_epochs = 0;
      r.best = snapshot(epoch);
      r.best_epoch = epoch;
    } else {
      ++bad_epochs;
    }
  }
  r.stopped_early = bad_epochs >= config.patience && epoch < config.epochs;
  r.last = snapshot(epoch);
  r.last.extra["best_loss"] = text::format_double(best_loss);
  r.last.extra["bad_epochs"] = std::to_string(bad_epochs);
  r.last.extra["best_epoch"] = std::to_string(r.best_epoch);
  r.best.extra["best_epoch"] = std::to_string(r.best_epoch);
  return r;
}

}  // namespace wice
