#include "segdsl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "segdsl/backbone.hpp"
#include "segdsl/error.hpp"
#include "segdsl/feature_cache.hpp"
#include "segdsl/wav.hpp"

namespace fs = std::filesystem;

namespace segdsl::pipeline {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> cols;
  std::stringstream ss(line);
  std::string c;
  while (std::getline(ss, c, sep)) cols.push_back(c);
  if (!line.empty() && line.back() == sep) cols.emplace_back();
  return cols;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

json optional_json(const std::optional<std::size_t>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

json to_json(const dsp::FeatureGeometry& g) {
  json j;
  j["sample_rate"] = g.sample_rate;
  j["window_ms"] = g.window_ms;
  j["hop_ms"] = g.hop_ms;
  j["n_fft"] = g.n_fft;
  j["n_mels"] = g.n_mels;
  j["f_min"] = g.f_min;
  j["f_max"] = g.f_max;
  j["seg_len"] = g.seg_len;
  j["seg_hop_ms"] = g.seg_hop_ms;
  return j;
}

dsp::FeatureGeometry geometry_from_json(const json& j) {
  try {
    dsp::FeatureGeometry g;
    g.sample_rate = j.at("sample_rate").get<int>();
    g.window_ms = j.at("window_ms").get<double>();
    g.hop_ms = j.at("hop_ms").get<double>();
    g.n_fft = j.at("n_fft").get<int>();
    g.n_mels = j.at("n_mels").get<int>();
    g.f_min = j.at("f_min").get<double>();
    g.f_max = j.at("f_max").get<double>();
    g.seg_len = j.at("seg_len").get<std::size_t>();
    g.seg_hop_ms = j.at("seg_hop_ms").get<double>();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad geometry document: ") + e.what());
  }
}

json to_json(const synth::SynthSpec& s) {
  json j;
  j["classes"] = s.num_classes;
  j["utterances_per_class"] = s.utterances_per_class;
  j["utterance_seconds"] = s.utterance_seconds;
  j["sample_rate"] = s.sample_rate;
  j["signatures"] = s.signatures;
  j["contamination_rate"] = s.contamination_rate;
  j["contamination_runs"] = s.contamination_runs;
  j["snr_db"] = s.snr_db;
  j["tone_amplitude"] = s.tone_amplitude;
  j["distractors_per_slot"] = s.distractors_per_slot;
  j["distractor_db"] = s.distractor_db;
  j["distractor_slot_ms"] = s.distractor_slot_ms;
  j["seed"] = s.seed;
  return j;
}

json to_json(const nn::TrainConfig& c) {
  json j;
  j["optimizer"] = c.optimizer == nn::Optimizer::kAdam ? "adam" : "sgd";
  j["initial_lr"] = c.initial_lr;
  j["lr_decay_rate"] = c.lr_decay_rate;
  j["decay_every_epochs"] = c.decay_every_epochs;
  j["batch_size"] = c.batch_size;
  j["early_stop_patience"] = c.early_stop_patience;
  j["max_epochs"] = c.max_epochs;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_epsilon"] = c.adam_epsilon;
  j["holdout_fraction"] = c.holdout_fraction;
  j["restore_best"] = c.restore_best;
  return j;
}

json to_json(const agg::AggregationConfig& c) {
  json j;
  j["beta_low"] = c.beta_low;
  j["beta_high"] = c.beta_high;
  j["percentile_low"] = c.percentile_low;
  j["percentile_high"] = c.percentile_high;
  return j;
}

json to_json(const forest::ForestConfig& c) {
  json j;
  j["n_trees"] = c.n_trees;
  j["max_features"] = optional_json(c.max_features);
  j["min_samples_split"] = c.min_samples_split;
  j["max_depth"] = optional_json(c.max_depth);
  j["bootstrap"] = c.bootstrap;
  return j;
}

void write_synth_corpus(const synth::SynthCorpus& corpus, const fs::path& out_dir) {
  fs::create_directories(out_dir / "wav");
  std::vector<ManifestRow> rows;
  for (const synth::SynthUtterance& u : corpus.utterances) {
    const fs::path rel = fs::path("wav") / (u.utterance_id + ".wav");
    wav::write_pcm16(out_dir / rel, u.wave);
    rows.push_back({u.utterance_id, rel, synth::class_name(u.label), ""});
  }
  save_manifest(out_dir / "manifest.csv", rows, {"synth-gen " + to_json(corpus.spec).dump()});
  auto out = open_out(out_dir / "truth.csv");
  synth::write_truth(out, corpus);
}

FeaturizeResult featurize(const Manifest& manifest, const dsp::FeatureGeometry& geometry) {
  geometry.validate();
  const dsp::MelFilterbank fb = dsp::build_mel_filterbank(geometry.sample_rate, geometry.n_fft, geometry.n_mels,
                                                          geometry.f_min, geometry.f_max);
  FeaturizeResult result;
  for (const ManifestRow& row : manifest.rows) {
    dsp::Waveform wave;
    try {
      wave = wav::read(row.wav_path);
    } catch (const Error& e) {
      throw DataError(row.wav_path.string() + ": " + e.what());
    }
    std::vector<dsp::SegmentFeatures> segs;
    try {
      segs = dsp::extract_segments(wave, geometry, fb, row.utterance_id);
    } catch (const TooShortError& e) {
      throw DataError(row.wav_path.string() + ": " + e.what());
    }
    result.counts.emplace_back(row.utterance_id, segs.size());
    for (auto& s : segs) result.segments.push_back(std::move(s));
  }
  return result;
}

void save_cache(const fs::path& path, const std::vector<dsp::SegmentFeatures>& segments,
                const dsp::FeatureGeometry& geometry) {
  cache::save_segments(path, segments, static_cast<std::uint32_t>(geometry.n_mels),
                static_cast<std::uint32_t>(geometry.seg_len));
  write_json(fs::path(path.string() + ".json"), json{{"geometry", to_json(geometry)}});
}

std::vector<dsp::SegmentFeatures> load_cache(const fs::path& path) { return cache::load_segments(path); }

std::optional<dsp::FeatureGeometry> load_cache_geometry(const fs::path& path) {
  const fs::path side(path.string() + ".json");
  if (!fs::exists(side)) return std::nullopt;
  return geometry_from_json(read_json(side).at("geometry"));
}

TrainOutcome run_training(SegmentCorpus corpus, const TrainOptions& options, json config) {
  corpus.require_labels();
  dsl::DslConfig cfg = options.dsl;
  if (options.baseline) cfg.iterations = 0;
  cfg.train.seed = options.seed;
  cfg.rule.validate();
  cfg.train.validate();

  config["rule"] = options.baseline ? std::string("none") : dsl::to_string(cfg.rule.kind);
  if (!options.baseline && cfg.rule.kind == dsl::RuleKind::kWdsl) {
    config["alpha"] = cfg.rule.alpha.value_or(0.2);
    if (!cfg.rule.alpha_schedule.empty()) config["alpha_schedule"] = cfg.rule.alpha_schedule;
  } else {
    config["alpha"] = nullptr;
  }
  config["iterations"] = cfg.iterations;
  config["folds"] = options.folds;
  config["seed"] = options.seed;
  config["warm_start"] = cfg.warm_start;
  config["train"] = to_json(cfg.train);
  config["classes"] = corpus.num_classes;
  config["utterances"] = corpus.utterances.size();
  config["segments"] = corpus.segments.size();

  TrainOutcome out;
  out.folds = eval::utterance_folds(corpus, options.folds, options.seed);
  out.oof = eval::out_of_fold_predictions(corpus, out.folds, cfg);
  out.corpus = std::move(corpus);
  out.config = std::move(config);
  return out;
}

TruthMap load_truth(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open truth file " + path.string());
  TruthMap map;
  for (auto& [id, intervals] : synth::read_truth(in)) {
    auto& dst = map[id];
    dst.insert(dst.end(), intervals.begin(), intervals.end());
  }
  return map;
}

std::vector<CorrectionRow> correction_by_iteration(const TrainOutcome& outcome, const TruthMap& truth,
                                                   const dsp::FeatureGeometry& geometry) {
  const SegmentCorpus& corpus = outcome.corpus;
  std::vector<std::size_t> true_class(corpus.segments.size());
  std::vector<std::size_t> noisy(corpus.segments.size());
  for (const UtteranceEntry& u : corpus.utterances) {
    auto it = truth.find(u.utterance_id);
    if (it == truth.end() || it->second.empty()) {
      throw DataError("truth file has no intervals for '" + u.utterance_id + "'");
    }
    const double seconds = it->second.back().end_s;
    auto seg_truth = synth::segment_truth(it->second, seconds, *u.label, geometry, u.segments.size());
    for (std::size_t i = 0; i < u.segments.size(); ++i) {
      true_class[u.segments[i]] = seg_truth[i];
      noisy[u.segments[i]] = *u.label;
    }
  }

  std::size_t iterations = 0;
  for (const auto& run : outcome.oof.runs) iterations = std::max(iterations, run.snapshots.size());
  std::vector<CorrectionRow> rows(iterations);
  for (std::size_t t = 0; t < iterations; ++t) {
    rows[t].iteration = t;
    std::set<std::size_t> seen;
    std::vector<std::size_t> arg, nz, tr;
    for (const auto& run : outcome.oof.runs) {
      if (t >= run.snapshots.size()) continue;
      const dsl::LabelSnapshot& snap = run.snapshots[t];
      for (std::size_t i = 0; i < snap.segments.size(); ++i) {
        const std::size_t s = snap.segments[i];
        arg.push_back(snap.targets[i].argmax());
        nz.push_back(noisy[s]);
        tr.push_back(true_class[s]);
        seen.insert(s);
      }
    }
    rows[t].stats = synth::correction_rate(arg, nz, tr);
    rows[t].distinct_segments = seen.size();
    for (std::size_t s : seen) rows[t].distinct_corrupted += true_class[s] != noisy[s] ? 1 : 0;
  }
  return rows;
}

json correction_json(const std::vector<CorrectionRow>& rows, std::size_t num_classes) {
  json arr = json::array();
  const double p0 = num_classes > 0 ? 1.0 / static_cast<double>(num_classes) : 0.0;
  for (const CorrectionRow& r : rows) {
    json j;
    j["iteration"] = r.iteration;
    j["corrupted"] = r.stats.corrupted;
    j["corrected"] = r.stats.corrected;
    j["clean"] = r.stats.clean;
    j["damaged"] = r.stats.damaged;
    j["distinct_corrupted"] = r.distinct_corrupted;
    j["distinct_segments"] = r.distinct_segments;
    auto cr = r.stats.correction_rate();
    auto dr = r.stats.damage_rate();
    j["correction_rate"] = cr ? json(*cr) : json(nullptr);
    j["damage_rate"] = dr ? json(*dr) : json(nullptr);
    // Standard error of a chance-level (1/K) correction rate.
    j["chance_standard_error"] =
        r.distinct_corrupted > 0 ? json(std::sqrt(p0 * (1.0 - p0) / static_cast<double>(r.distinct_corrupted)))
                                 : json(nullptr);
    arr.push_back(std::move(j));
  }
  return arr;
}

PredictionTable prediction_table(const TrainOutcome& outcome, std::size_t iteration) {
  if (iteration >= outcome.oof.predictions.size()) {
    throw ConfigError("no predictions for iteration " + std::to_string(iteration));
  }
  PredictionTable table;
  table.config = outcome.config;
  table.config["prediction_iteration"] = iteration;
  table.num_classes = outcome.corpus.num_classes;
  const auto& preds = outcome.oof.predictions[iteration];
  for (std::size_t s = 0; s < outcome.corpus.segments.size(); ++s) {
    table.utterance_ids.push_back(outcome.corpus.segments[s].utterance_id);
    table.folds.push_back(outcome.oof.segment_fold[s]);
    table.predictions.push_back(preds[s]);
  }
  return table;
}

void write_predictions(std::ostream& out, const PredictionTable& table, const SegmentCorpus& corpus) {
  if (table.predictions.size() != corpus.segments.size()) {
    throw SizeError("prediction table does not cover the corpus");
  }
  out << "# " << table.config.dump() << '\n';
  out << "segment_id,utterance_id,fold";
  for (std::size_t k = 0; k < table.num_classes; ++k) out << ",p" << k;
  out << '\n';
  for (std::size_t s = 0; s < table.predictions.size(); ++s) {
    out << corpus.segments[s].segment_id << ',' << table.utterance_ids[s] << ',' << table.folds[s];
    for (double p : table.predictions[s].probs()) out << ',' << fmt17(p);
    out << '\n';
  }
}

PredictionTable read_predictions(std::istream& in) {
  PredictionTable table;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      try {
        table.config = json::parse(line.substr(1));
      } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("predictions: bad config line: ") + e.what());
      }
      continue;
    }
    auto cols = split(line, ',');
    if (!header) {
      if (cols.size() < 5 || cols[0] != "segment_id" || cols[1] != "utterance_id" || cols[2] != "fold") {
        throw DataError("predictions: expected header segment_id,utterance_id,fold,p0,...");
      }
      table.num_classes = cols.size() - 3;
      header = true;
      continue;
    }
    if (cols.size() != table.num_classes + 3) throw DataError("predictions: wrong column count in '" + line + "'");
    std::vector<double> probs;
    try {
      for (std::size_t k = 0; k < table.num_classes; ++k) probs.push_back(std::stod(cols[3 + k]));
      table.folds.push_back(static_cast<std::size_t>(std::stoull(cols[2])));
    } catch (const std::exception&) {
      throw DataError("predictions: bad number in '" + line + "'");
    }
    table.utterance_ids.push_back(cols[1]);
    try {
      table.predictions.emplace_back(std::move(probs));
    } catch (const DomainError& e) {
      throw DataError(std::string("predictions: ") + e.what());
    }
  }
  if (!header) throw DataError("predictions: missing header");
  return table;
}

EvaluateOutcome evaluate(const PredictionTable& table, const Manifest& manifest,
                         const EvaluateOptions& options) {
  options.aggregation.validate();
  options.forest.validate();
  const std::size_t K = manifest.num_classes();
  if (K < 2) throw DataError("evaluate: manifest needs at least 2 labeled classes");
  if (table.num_classes != K) {
    throw DataError("evaluate: predictions have " + std::to_string(table.num_classes) +
                    " classes, manifest has " + std::to_string(K));
  }
  std::map<std::string, std::vector<nn::SoftLabel>> by_utt;
  for (std::size_t i = 0; i < table.predictions.size(); ++i) {
    by_utt[table.utterance_ids[i]].push_back(table.predictions[i]);
  }

  EvaluateOutcome out;
  std::vector<std::vector<double>> rows;
  for (const ManifestRow& row : manifest.rows) {
    if (row.label.empty()) continue;
    auto it = by_utt.find(row.utterance_id);
    if (it == by_utt.end()) throw DataError("evaluate: no predictions for utterance '" + row.utterance_id + "'");
    out.representations.push_back(agg::utterance_representation(it->second, options.aggregation, row.utterance_id));
    rows.push_back(out.representations.back().values);
    out.labels.push_back(*manifest.class_index(row.label));
  }
  out.predicted = eval::cross_validated_forest(rows, out.labels, K, options.folds2, options.seed2, options.forest);
  out.report = eval::utterance_metrics(out.labels, out.predicted, K);

  json doc;
  doc["wa"] = out.report.wa;
  doc["ua"] = out.report.ua;
  doc["pooling"] = "micro";
  doc["utterances"] = out.labels.size();
  doc["class_names"] = manifest.class_names;
  doc["confusion"] = out.report.confusion;
  doc["per_class_recall"] = out.report.per_class_recall;
  doc["support"] = out.report.support;
  json ev;
  ev["aggregation"] = to_json(options.aggregation);
  ev["forest"] = to_json(options.forest);
  ev["folds2"] = options.folds2;
  ev["seed2"] = options.seed2;
  doc["config"] = json{{"train", table.config}, {"evaluate", ev}};
  out.document = std::move(doc);
  return out;
}

void write_representations(std::ostream& out, const EvaluateOutcome& outcome) {
  out << "utterance_id,label";
  const std::size_t d = outcome.representations.empty() ? 0 : outcome.representations[0].values.size();
  for (std::size_t i = 0; i < d; ++i) out << ",r" << i;
  out << '\n';
  for (std::size_t u = 0; u < outcome.representations.size(); ++u) {
    out << outcome.representations[u].utterance_id << ',' << outcome.labels[u];
    for (double v : outcome.representations[u].values) out << ',' << fmt17(v);
    out << '\n';
  }
}

void write_per_class(std::ostream& out, const EvaluateOutcome& outcome,
                     const std::vector<std::string>& class_names) {
  out << "class,support,correct,recall\n";
  for (const eval::ClassAccuracy& c : eval::per_class_report(outcome.report)) {
    out << (c.klass < class_names.size() ? class_names[c.klass] : std::to_string(c.klass)) << ','
        << c.support << ',' << c.correct << ',' << fmt6(c.recall) << '\n';
  }
}

namespace {

std::string cell(const json& j) {
  if (j.is_null()) return "";
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_float()) return fmt6(j.get<double>());
  return j.dump();
}

const json& lookup(const json& doc, std::initializer_list<const char*> path) {
  static const json null_value;
  const json* cur = &doc;
  for (const char* key : path) {
    if (!cur->is_object() || !cur->contains(key)) return null_value;
    cur = &(*cur)[key];
  }
  return *cur;
}

}  // namespace

void write_report(std::ostream& out, const std::vector<std::pair<std::string, json>>& documents) {
  if (documents.empty()) throw ConfigError("report: no metric documents");
  const double wa0 = lookup(documents[0].second, {"wa"}).get<double>();
  const double ua0 = lookup(documents[0].second, {"ua"}).get<double>();
  out << "document,rule,alpha,iterations,evaluated_iteration,folds,seed,folds2,seed2,wa,ua,delta_wa,delta_ua\n";
  for (const auto& [name, doc] : documents) {
    if (!doc.contains("wa") || !doc.contains("ua")) throw DataError(name + ": not a metrics document");
    const double wa = doc["wa"].get<double>();
    const double ua = doc["ua"].get<double>();
    out << name << ',' << cell(lookup(doc, {"config", "train", "rule"})) << ','
        << cell(lookup(doc, {"config", "train", "alpha"})) << ','
        << cell(lookup(doc, {"config", "train", "iterations"})) << ','
        << cell(lookup(doc, {"config", "train", "prediction_iteration"})) << ','
        << cell(lookup(doc, {"config", "train", "folds"})) << ','
        << cell(lookup(doc, {"config", "train", "seed"})) << ','
        << cell(lookup(doc, {"config", "evaluate", "folds2"})) << ','
        << cell(lookup(doc, {"config", "evaluate", "seed2"})) << ',' << fmt6(wa) << ',' << fmt6(ua) << ','
        << fmt6(wa - wa0) << ',' << fmt6(ua - ua0) << '\n';
  }
  bool any = false;
  for (const auto& [name, doc] : documents) any = any || doc.contains("correction");
  if (!any) return;
  out << "\ndocument,iteration,corrupted,corrected,correction_rate,clean,damaged,damage_rate\n";
  for (const auto& [name, doc] : documents) {
    if (!doc.contains("correction")) continue;
    for (const json& r : doc["correction"]) {
      out << name << ',' << cell(r["iteration"]) << ',' << cell(r["corrupted"]) << ',' << cell(r["corrected"])
          << ',' << cell(r["correction_rate"]) << ',' << cell(r["clean"]) << ',' << cell(r["damaged"]) << ','
          << cell(r["damage_rate"]) << '\n';
    }
  }
}

void write_training_artifacts(const fs::path& out_dir, const TrainOutcome& outcome,
                              const dsl::LabelUpdateRule& rule, bool save_models) {
  fs::create_directories(out_dir / "snapshots");
  write_json(out_dir / "config.json", outcome.config);

  const std::size_t n_iter = outcome.oof.predictions.size();
  for (std::size_t t = 0; t < n_iter; ++t) {
    auto out = open_out(out_dir / ("predictions_iter" + std::to_string(t) + ".csv"));
    write_predictions(out, prediction_table(outcome, t), outcome.corpus);
  }
  {
    auto out = open_out(out_dir / "predictions.csv");
    write_predictions(out, prediction_table(outcome, n_iter - 1), outcome.corpus);
  }

  auto diag = open_out(out_dir / "diagnostics.csv");
  diag << "fold,iteration,mean_entropy,flipped_fraction,epochs\n";
  auto log = open_out(out_dir / "train_log.jsonl");
  const bool wdsl = rule.kind == dsl::RuleKind::kWdsl;
  for (std::size_t f = 0; f < outcome.oof.runs.size(); ++f) {
    const dsl::DslRunState& run = outcome.oof.runs[f];
    for (const auto& d : run.diagnostics) {
      diag << f << ',' << d.iteration << ',' << fmt17(d.mean_entropy) << ',' << fmt17(d.flipped_fraction) << ','
           << d.epochs << '\n';
    }
    for (std::size_t t = 0; t < run.logs.size(); ++t) {
      std::istringstream lines(run.logs[t].to_jsonl());
      std::string line;
      while (std::getline(lines, line)) {
        json row = json::parse(line);
        json tagged{{"fold", f}, {"iteration", t}};
        for (auto& [k, v] : row.items()) tagged[k] = v;
        log << tagged.dump() << '\n';
      }
    }
    for (const dsl::LabelSnapshot& snap : run.snapshots) {
      auto out = open_out(out_dir / "snapshots" /
                          ("fold" + std::to_string(f) + "_iter" + std::to_string(snap.iteration) + ".csv"));
      std::optional<double> alpha;
      if (wdsl && snap.iteration > 0) alpha = dsl::effective_alpha(rule, snap.iteration - 1);
      write_label_snapshot(out, outcome.corpus, snap, rule, alpha);
    }
    if (save_models) {
      fs::create_directories(out_dir / "models");
      for (std::size_t t = 0; t < run.models.size(); ++t) {
        const auto* cnn = dynamic_cast<const nn::ReferenceCnn*>(run.models[t].get());
        if (cnn == nullptr) continue;
        nn::save_model(out_dir / "models" / ("fold" + std::to_string(f) + "_iter" + std::to_string(t) + ".segm"),
                       *cnn);
      }
    }
  }
  if (!outcome.correction.empty()) {
    write_json(out_dir / "correction.json", correction_json(outcome.correction, outcome.corpus.num_classes));
  }
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

}  // namespace segdsl::pipeline
