#include <iostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "wice/pipeline.hpp"

namespace {

using wice::pipeline::RunConfig;

// Options bound to RunConfig fields; each maps to the config-file key of the
// same name with dashes as underscores.
struct Bindings {
  std::vector<std::pair<std::string, CLI::Option*>> options;

  template <typename T>
  void add(CLI::App* app, const std::string& name, T& field, const std::string& help) {
    std::string key = name;
    std::replace(key.begin(), key.end(), '-', '_');
    auto* opt = app->add_option("--" + name, field, help)->capture_default_str();
    if constexpr (CLI::detail::is_mutable_container<T>::value) opt->delimiter(',');
    options.emplace_back(key, opt);
  }

  std::set<std::string> locked() const {
    std::set<std::string> out;
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) out.insert(key);
    }
    return out;
  }
};

int check_error_rate(const wice::pipeline::StageReport& r, double threshold, std::string_view stage) {
  std::cout << r.to_json().dump() << '\n';
  if (r.error_rate() > threshold) {
    wice::pipeline::log(stage, "error rate " + wice::text::format_double(r.error_rate()) +
                                   " exceeds threshold " + wice::text::format_double(threshold));
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image context extraction from web pages with graph neural networks"};
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig cfg;
  std::string config_path;
  Bindings bind;
  app.add_option("--config", config_path, "JSON run config; command-line options take precedence")
      ->check(CLI::ExistingFile);
  bind.add(&app, "seed", cfg.seed, "Master seed");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with planted contexts");
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  bind.add(synth, "pages", cfg.pages, "Number of pages");
  bind.add(synth, "sites", cfg.sites, "Number of sites");

  auto* pre = app.add_subcommand("preprocess", "Parse HTML pages into DOM graphs (JSONL)");
  std::string pre_corpus, pre_manifest, pre_out;
  pre->add_option("--corpus", pre_corpus, "Directory of {page_id}.html files")->required();
  pre->add_option("--manifest", pre_manifest, "Manifest TSV (default: CORPUS/manifest.tsv)");
  pre->add_option("--out", pre_out, "Output graph file")->required();
  bind.add(pre, "denylist", cfg.denylist, "Prune rules file (default: built-in rules)");
  bind.add(pre, "error-rate-threshold", cfg.error_rate_threshold, "Fail when more pages than this fraction fail");

  auto* emb = app.add_subcommand("embed", "Embed every node text, reference and title");
  std::string emb_graphs, emb_cache, emb_out;
  emb->add_option("--graphs", emb_graphs, "Graph file")->required();
  emb->add_option("--cache", emb_cache, "Precomputed embedding cache (provider=cache)");
  emb->add_option("--out", emb_out, "Output embedding cache")->required();
  bind.add(emb, "provider", cfg.provider, "hashed or cache");
  bind.add(emb, "dim", cfg.dim, "Embedding dimension");
  bind.add(emb, "error-rate-threshold", cfg.error_rate_threshold, "Fail when more pages than this fraction fail");

  auto* tr = app.add_subcommand("train", "Train a model on the training partition");
  wice::pipeline::TrainPaths tp;
  tr->add_option("--graphs", tp.graphs, "Graph file")->required();
  tr->add_option("--embeddings", tp.embeddings, "Embedding cache from embed")->required();
  tr->add_option("--out", tp.checkpoint, "Best checkpoint path (last state goes to OUT.last)")->required();
  tr->add_option("--metrics", tp.metrics, "Per-epoch metrics JSONL (default: OUT.metrics.jsonl)");
  tr->add_option("--split-out", tp.split_out, "Split file (default: OUT.split.json)");
  tr->add_flag("--resume", tp.resume, "Continue from OUT.last when present");
  bind.add(tr, "arch", cfg.arch, "wgcn, gcn, gat or dgcn");
  bind.add(tr, "split", cfg.split, "by_page or by_site");
  bind.add(tr, "dim", cfg.dim, "Embedding dimension");
  bind.add(tr, "epochs", cfg.epochs, "Maximum epochs");
  bind.add(tr, "patience", cfg.patience, "Early-stopping patience in epochs");
  bind.add(tr, "accumulate", cfg.accumulate, "Pages per optimizer step");
  bind.add(tr, "optimizer", cfg.optimizer, "adam or sgd");
  bind.add(tr, "learning-rate", cfg.learning_rate, "Learning rate");
  bind.add(tr, "weight-decay", cfg.weight_decay, "L2 weight decay");
  bind.add(tr, "hidden", cfg.hidden, "Hidden widths, comma-separated (default per architecture)");
  bind.add(tr, "heads", cfg.heads, "Attention heads (gat)");
  bind.add(tr, "depth", cfg.depth, "Residual blocks (dgcn)");
  bind.add(tr, "readout", cfg.readout, "image or mean (gcn, gat, dgcn)");
  bind.add(tr, "weight-mode", cfg.weight_mode, "softmax or raw (wgcn)");

  auto* ev = app.add_subcommand("evaluate", "Score context extraction methods");
  wice::pipeline::EvaluatePaths ep;
  ev->add_option("--graphs", ep.graphs, "Graph file")->required();
  ev->add_option("--embeddings", ep.embeddings, "Embedding cache")->required();
  ev->add_option("--ckpt,--checkpoint", ep.checkpoint, "Checkpoint for model-driven methods");
  ev->add_option("--split-file", ep.split_file, "Split file written by train (default: CKPT.split.json)");
  ev->add_option("--out", ep.out, "Per-page results JSONL (summary goes to OUT.summary.json)")->required();
  bind.add(ev, "methods", cfg.methods, "Comma-separated methods");
  bind.add(ev, "partition", cfg.partition, "train, valid, test or all");
  bind.add(ev, "threshold", cfg.threshold, "Loss threshold for the within-threshold fraction");
  bind.add(ev, "random-seed", cfg.random_seed, "Seed for the random baseline");

  auto* ex = app.add_subcommand("extract", "Print the chosen context for one HTML page");
  std::string ex_ckpt, ex_html, ex_cache;
  ex->add_option("--ckpt,--checkpoint", ex_ckpt, "Trained checkpoint")->required();
  ex->add_option("--html", ex_html, "HTML file")->required()->check(CLI::ExistingFile);
  ex->add_option("--cache", ex_cache, "Embedding cache for non-hashed providers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  namespace pl = wice::pipeline;
  try {
    if (!config_path.empty()) cfg = pl::load_config(config_path, bind.locked(), cfg);
    if (synth->parsed()) {
      const auto r = pl::run_synth(cfg, synth_out);
      std::cout << r.to_json().dump() << '\n';
      return 0;
    }
    if (pre->parsed()) {
      if (pre_manifest.empty()) pre_manifest = pl::CorpusPaths{pre_corpus}.manifest();
      const auto r = pl::run_preprocess(cfg, pre_corpus, pre_manifest, pre_out);
      return check_error_rate(r, cfg.error_rate_threshold, "preprocess");
    }
    if (emb->parsed()) {
      const auto r = pl::run_embed(cfg, emb_graphs, emb_cache, emb_out);
      return check_error_rate(r, cfg.error_rate_threshold, "embed");
    }
    if (tr->parsed()) {
      if (tp.metrics.empty()) tp.metrics = tp.checkpoint + ".metrics.jsonl";
      const auto r = pl::run_train(cfg, tp);
      std::cout << r.to_json().dump() << '\n';
      return 0;
    }
    if (ev->parsed()) {
      const auto r = pl::run_evaluate(cfg, ep);
      std::cout << r.summary.dump(2) << '\n';
      return 0;
    }
    if (ex->parsed()) {
      const auto x = pl::run_extract(ex_ckpt, ex_html, ex_cache);
      std::cout << x.node_id << '\t' << wice::text::format_double(x.weight) << '\t' << x.text << '\n';
      return 0;
    }
  } catch (const wice::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pl::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
