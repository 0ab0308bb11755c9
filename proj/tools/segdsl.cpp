// segdsl: synth-gen, featurize, train, evaluate and report.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "segdsl/error.hpp"
#include "segdsl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace segdsl;
using pipeline::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

void require_empty_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw ConfigError(dir.string() + " is not empty (use --force to overwrite)");
  }
}

void echo(const std::string& command, const json& config) {
  std::cout << "# " << command << ' ' << config.dump() << '\n';
}

struct SynthFlags {
  synth::SynthSpec spec;
  fs::path out;
  bool force = false;
};

struct FeaturizeFlags {
  fs::path manifest;
  fs::path out;
  dsp::FeatureGeometry geometry;
};

struct TrainFlags {
  fs::path cache;
  fs::path manifest;
  fs::path out;
  std::optional<fs::path> truth;
  std::string rule = "wdsl";
  std::optional<double> alpha;
  std::vector<double> alpha_schedule;
  std::size_t iterations = 1;
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  nn::TrainConfig train;
  bool warm_start = false;
  bool no_models = false;
};

struct EvaluateFlags {
  fs::path predictions;
  fs::path manifest;
  fs::path out;
  pipeline::EvaluateOptions options;
  std::optional<std::size_t> max_features;
  std::optional<std::size_t> max_depth;
};

struct ReportFlags {
  std::vector<fs::path> metrics;
  std::optional<fs::path> out;
};

void cmd_synth_gen(const SynthFlags& f) {
  const synth::SynthSpec spec = f.spec.resolved();
  require_empty_dir(f.out, f.force);
  if (f.force && fs::exists(f.out)) {
    fs::remove_all(f.out / "wav");
    fs::remove(f.out / "manifest.csv");
    fs::remove(f.out / "truth.csv");
  }
  echo("synth-gen", pipeline::to_json(spec));
  const synth::SynthCorpus corpus = synth::generate_corpus(spec);
  pipeline::write_synth_corpus(corpus, f.out);
  std::cout << "wrote " << corpus.utterances.size() << " utterances to " << f.out.string() << '\n';
}

void cmd_featurize(const FeaturizeFlags& f) {
  f.geometry.validate();
  json cfg;
  cfg["manifest"] = f.manifest.string();
  cfg["out"] = f.out.string();
  cfg["geometry"] = pipeline::to_json(f.geometry);
  echo("featurize", cfg);
  const Manifest manifest = load_manifest(f.manifest);
  const auto result = pipeline::featurize(manifest, f.geometry);
  std::cout << "utterance_id,segments\n";
  for (const auto& [id, n] : result.counts) std::cout << id << ',' << n << '\n';
  if (f.out.has_parent_path()) fs::create_directories(f.out.parent_path());
  pipeline::save_cache(f.out, result.segments, f.geometry);
}

void cmd_train(const TrainFlags& f) {
  const bool baseline = f.rule == "none";
  pipeline::TrainOptions opt;
  if (!baseline) {
    const dsl::RuleKind kind = dsl::parse_rule_kind(f.rule);
    if (kind != dsl::RuleKind::kWdsl && (f.alpha || !f.alpha_schedule.empty())) {
      throw ConfigError("--alpha and --alpha-schedule only apply to --rule wdsl");
    }
    opt.dsl.rule = {kind, std::nullopt, {}};
    if (kind == dsl::RuleKind::kWdsl) {
      opt.dsl.rule.alpha = f.alpha.value_or(0.2);
      opt.dsl.rule.alpha_schedule = f.alpha_schedule;
    }
  }
  opt.baseline = baseline;
  opt.dsl.iterations = f.iterations;
  opt.dsl.train = f.train;
  opt.dsl.warm_start = f.warm_start;
  opt.folds = f.folds;
  opt.seed = f.seed;

  const Manifest manifest = load_manifest(f.manifest);
  auto segments = pipeline::load_cache(f.cache);
  const auto geometry = pipeline::load_cache_geometry(f.cache);
  SegmentCorpus corpus = SegmentCorpus::assemble(std::move(segments), manifest.label_map(), manifest.num_classes());
  opt.dsl.factory = dsl::reference_cnn_factory(corpus);

  std::optional<fs::path> truth_path = f.truth;
  if (!truth_path) {
    const fs::path guess = f.manifest.parent_path() / "truth.csv";
    if (fs::exists(guess)) truth_path = guess;
  }

  json cfg;
  cfg["cache"] = f.cache.string();
  cfg["manifest"] = f.manifest.string();
  cfg["truth"] = truth_path ? json(truth_path->string()) : json(nullptr);
  cfg["class_names"] = manifest.class_names;
  if (geometry) cfg["geometry"] = pipeline::to_json(*geometry);

  // Echo the effective configuration before the long-running part.
  {
    json preview = cfg;
    preview["rule"] = f.rule;
    preview["alpha"] = baseline || !opt.dsl.rule.alpha ? json(nullptr) : json(*opt.dsl.rule.alpha);
    preview["iterations"] = baseline ? 0 : f.iterations;
    preview["folds"] = f.folds;
    preview["seed"] = f.seed;
    preview["train"] = pipeline::to_json(f.train);
    echo("train", preview);
  }

  require_empty_dir(f.out, true);
  pipeline::TrainOutcome outcome = pipeline::run_training(std::move(corpus), opt, cfg);
  if (truth_path) {
    if (!geometry) throw DataError("cache " + f.cache.string() + " has no geometry sidecar; cannot use truth file");
    outcome.correction = pipeline::correction_by_iteration(outcome, pipeline::load_truth(*truth_path), *geometry);
  }
  pipeline::write_training_artifacts(f.out, outcome, opt.dsl.rule, !f.no_models);

  std::cout << "fold,iteration,mean_entropy,flipped_fraction,epochs\n";
  for (std::size_t k = 0; k < outcome.oof.runs.size(); ++k) {
    for (const auto& d : outcome.oof.runs[k].diagnostics) {
      std::printf("%zu,%zu,%.6f,%.6f,%zu\n", k, d.iteration, d.mean_entropy, d.flipped_fraction, d.epochs);
    }
  }
  std::fflush(stdout);
  for (const auto& r : outcome.correction) {
    auto cr = r.stats.correction_rate();
    auto dr = r.stats.damage_rate();
    std::cout << "iteration " << r.iteration << ": correction_rate=" << (cr ? std::to_string(*cr) : "n/a")
              << " damage_rate=" << (dr ? std::to_string(*dr) : "n/a") << '\n';
  }
}

void cmd_evaluate(EvaluateFlags f) {
  f.options.forest.max_features = f.max_features;
  f.options.forest.max_depth = f.max_depth;
  json cfg;
  cfg["predictions"] = f.predictions.string();
  cfg["manifest"] = f.manifest.string();
  cfg["aggregation"] = pipeline::to_json(f.options.aggregation);
  cfg["forest"] = pipeline::to_json(f.options.forest);
  cfg["folds2"] = f.options.folds2;
  cfg["seed2"] = f.options.seed2;
  echo("evaluate", cfg);

  std::ifstream in(f.predictions);
  if (!in) throw DataError("cannot open predictions " + f.predictions.string());
  const pipeline::PredictionTable table = pipeline::read_predictions(in);
  const Manifest manifest = load_manifest(f.manifest);
  pipeline::EvaluateOutcome outcome = pipeline::evaluate(table, manifest, f.options);

  const fs::path correction = f.predictions.parent_path() / "correction.json";
  if (fs::exists(correction)) outcome.document["correction"] = pipeline::read_json(correction);

  fs::create_directories(f.out);
  pipeline::write_json(f.out / "metrics.json", outcome.document);
  {
    std::ofstream reps(f.out / "representations.csv");
    pipeline::write_representations(reps, outcome);
    std::ofstream pc(f.out / "per_class.csv");
    pipeline::write_per_class(pc, outcome, manifest.class_names);
  }
  pipeline::write_per_class(std::cout, outcome, manifest.class_names);
  std::printf("wa=%.6f ua=%.6f pooling=micro\n", outcome.report.wa, outcome.report.ua);
}

void cmd_report(const ReportFlags& f) {
  std::vector<std::pair<std::string, json>> docs;
  for (const fs::path& p : f.metrics) {
    if (!fs::exists(p)) throw DataError("missing metrics file " + p.string());
    docs.emplace_back(p.string(), pipeline::read_json(p));
  }
  if (f.out) {
    std::ofstream out(*f.out);
    if (!out) throw DataError("cannot write " + f.out->string());
    pipeline::write_report(out, docs);
  }
  pipeline::write_report(std::cout, docs);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segment-level self-learning for utterance classification"};
  app.require_subcommand(1);

  SynthFlags sf;
  auto* synth_cmd = app.add_subcommand("synth-gen", "Generate a synthetic tone corpus with segment-level truth");
  synth_cmd->add_option("--out", sf.out, "Output directory")->required();
  synth_cmd->add_option("--classes", sf.spec.num_classes, "Number of classes")->capture_default_str();
  synth_cmd->add_option("--per-class", sf.spec.utterances_per_class, "Utterances per class")->capture_default_str();
  synth_cmd->add_option("--seconds", sf.spec.utterance_seconds, "Utterance duration")->capture_default_str();
  synth_cmd->add_option("--sample-rate", sf.spec.sample_rate)->capture_default_str();
  synth_cmd->add_option("--contamination", sf.spec.contamination_rate, "Contaminated fraction, [0, 0.5)")
      ->capture_default_str();
  synth_cmd->add_option("--runs", sf.spec.contamination_runs, "Contamination runs per utterance")
      ->capture_default_str();
  synth_cmd->add_option("--snr", sf.spec.snr_db, "Signature-to-noise ratio in dB")->capture_default_str();
  synth_cmd->add_option("--amplitude", sf.spec.tone_amplitude)->capture_default_str();
  synth_cmd->add_option("--distractors", sf.spec.distractors_per_slot, "Distractor tones per slot")
      ->capture_default_str();
  synth_cmd->add_option("--distractor-db", sf.spec.distractor_db)->capture_default_str();
  synth_cmd->add_option("--slot-ms", sf.spec.distractor_slot_ms)->capture_default_str();
  synth_cmd->add_option("--seed", sf.spec.seed)->capture_default_str();
  synth_cmd->add_flag("--force", sf.force, "Overwrite a non-empty output directory");

  FeaturizeFlags ff;
  auto* feat_cmd = app.add_subcommand("featurize", "Log-mel segments for every manifest row");
  feat_cmd->add_option("--manifest", ff.manifest)->required();
  feat_cmd->add_option("--out", ff.out, "Feature cache path")->required();
  feat_cmd->add_option("--sample-rate", ff.geometry.sample_rate)->capture_default_str();
  feat_cmd->add_option("--window-ms", ff.geometry.window_ms)->capture_default_str();
  feat_cmd->add_option("--hop-ms", ff.geometry.hop_ms)->capture_default_str();
  feat_cmd->add_option("--n-fft", ff.geometry.n_fft)->capture_default_str();
  feat_cmd->add_option("--n-mels", ff.geometry.n_mels)->capture_default_str();
  feat_cmd->add_option("--f-min", ff.geometry.f_min)->capture_default_str();
  feat_cmd->add_option("--f-max", ff.geometry.f_max)->capture_default_str();
  feat_cmd->add_option("--seg-len", ff.geometry.seg_len)->capture_default_str();
  feat_cmd->add_option("--seg-hop-ms", ff.geometry.seg_hop_ms)->capture_default_str();

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Out-of-fold self-learning on a feature cache");
  train_cmd->add_option("--cache", tf.cache)->required();
  train_cmd->add_option("--manifest", tf.manifest)->required();
  train_cmd->add_option("--out", tf.out)->required();
  train_cmd->add_option("--truth", tf.truth, "Segment truth file (default: truth.csv beside the manifest)");
  train_cmd->add_option("--rule", tf.rule)
      ->check(CLI::IsMember({"bdsl", "wdsl", "gsl", "dhl", "none"}))
      ->capture_default_str();
  train_cmd->add_option("--alpha", tf.alpha, "WDSL weight on the noisy label (default 0.2)");
  train_cmd->add_option("--alpha-schedule", tf.alpha_schedule, "Per-round WDSL alphas");
  train_cmd->add_option("--iterations", tf.iterations)->capture_default_str();
  train_cmd->add_option("--folds", tf.folds)->capture_default_str();
  train_cmd->add_option("--seed", tf.seed)->capture_default_str();
  train_cmd->add_option("--lr", tf.train.initial_lr)->capture_default_str();
  train_cmd->add_option("--lr-decay", tf.train.lr_decay_rate)->capture_default_str();
  train_cmd->add_option("--decay-every", tf.train.decay_every_epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", tf.train.batch_size)->capture_default_str();
  train_cmd->add_option("--patience", tf.train.early_stop_patience)->capture_default_str();
  train_cmd->add_option("--max-epochs", tf.train.max_epochs)->capture_default_str();
  train_cmd->add_option("--holdout", tf.train.holdout_fraction)->capture_default_str();
  train_cmd->add_flag("--warm-start", tf.warm_start);
  train_cmd->add_flag("--no-models", tf.no_models, "Skip writing model checkpoints");

  EvaluateFlags ef;
  auto* eval_cmd = app.add_subcommand("evaluate", "Aggregate predictions and cross-validate the forest");
  eval_cmd->add_option("--predictions", ef.predictions)->required();
  eval_cmd->add_option("--manifest", ef.manifest)->required();
  eval_cmd->add_option("--out", ef.out)->required();
  eval_cmd->add_option("--folds2", ef.options.folds2)->capture_default_str();
  eval_cmd->add_option("--seed2", ef.options.seed2)->capture_default_str();
  eval_cmd->add_option("--trees", ef.options.forest.n_trees)->capture_default_str();
  eval_cmd->add_option("--max-features", ef.max_features);
  eval_cmd->add_option("--max-depth", ef.max_depth);
  eval_cmd->add_option("--min-samples-split", ef.options.forest.min_samples_split)->capture_default_str();
  eval_cmd->add_option("--beta-low", ef.options.aggregation.beta_low)->capture_default_str();
  eval_cmd->add_option("--beta-high", ef.options.aggregation.beta_high)->capture_default_str();

  ReportFlags rf;
  auto* report_cmd = app.add_subcommand("report", "Compare metrics documents");
  report_cmd->add_option("metrics", rf.metrics, "metrics.json files; the first is the reference")->required();
  report_cmd->add_option("--out", rf.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*synth_cmd) cmd_synth_gen(sf);
    if (*feat_cmd) cmd_featurize(ff);
    if (*train_cmd) cmd_train(tf);
    if (*eval_cmd) cmd_evaluate(ef);
    if (*report_cmd) cmd_report(rf);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const TooShortError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const SizeError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}
