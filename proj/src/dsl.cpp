#include "segdsl/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "segdsl/error.hpp"
#include "segdsl/random.hpp"

namespace segdsl::dsl {

std::string to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::kBdsl: return "bdsl";
    case RuleKind::kWdsl: return "wdsl";
    case RuleKind::kGsl: return "gsl";
    case RuleKind::kDhl: return "dhl";
  }
  return "unknown";
}

RuleKind parse_rule_kind(const std::string& name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "bdsl") return RuleKind::kBdsl;
  if (lower == "wdsl") return RuleKind::kWdsl;
  if (lower == "gsl") return RuleKind::kGsl;
  if (lower == "dhl" || lower == "hdl") return RuleKind::kDhl;
  throw ConfigError("unknown label update rule '" + name + "'");
}

void LabelUpdateRule::validate() const {
  if (kind == RuleKind::kWdsl) {
    if (!alpha) throw ConfigError("WDSL rule requires alpha");
    if (!(*alpha >= 0.0 && *alpha <= 1.0)) throw ConfigError("WDSL alpha must lie in [0, 1]");
    for (std::size_t i = 0; i < alpha_schedule.size(); ++i) {
      const double a = alpha_schedule[i];
      if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("alpha schedule values must lie in [0, 1]");
      if (i > 0 && a > alpha_schedule[i - 1]) {
        throw ConfigError("alpha schedule must be non-increasing");
      }
    }
  } else if (alpha || !alpha_schedule.empty()) {
    throw ConfigError("alpha is only meaningful for the WDSL rule");
  }
}

double effective_alpha(const LabelUpdateRule& rule, std::size_t round) {
  if (rule.kind != RuleKind::kWdsl) {
    throw ConfigError("effective_alpha called for rule " + to_string(rule.kind));
  }
  if (rule.alpha_schedule.empty()) {
    if (!rule.alpha) throw ConfigError("WDSL rule requires alpha");
    return *rule.alpha;
  }
  return rule.alpha_schedule[std::min(round, rule.alpha_schedule.size() - 1)];
}

nn::SoftLabel update_bdsl(const nn::SoftLabel& pred) { return pred; }

nn::SoftLabel update_wdsl(const nn::SoftLabel& pred, const nn::SoftLabel& noisy, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw DomainError("WDSL alpha " + std::to_string(alpha) + " outside [0, 1]");
  }
  if (pred.size() != noisy.size()) throw SizeError("WDSL: prediction and noisy label sizes differ");
  // The endpoints return their operand unchanged so they are exact.
  if (alpha == 0.0) return pred;
  if (alpha == 1.0) return noisy;
  std::vector<double> mix(pred.size());
  for (std::size_t k = 0; k < mix.size(); ++k) mix[k] = (1.0 - alpha) * pred[k] + alpha * noisy[k];
  return nn::SoftLabel(std::move(mix));
}

nn::SoftLabel update_gsl(std::span<const nn::SoftLabel> utterance_preds) {
  if (utterance_preds.empty()) throw DataError("GSL: utterance has no segments");
  const std::size_t k_classes = utterance_preds.front().size();
  std::vector<double> mean(k_classes, 0.0);
  for (const auto& p : utterance_preds) {
    if (p.size() != k_classes) throw SizeError("GSL: inconsistent class counts");
    for (std::size_t k = 0; k < k_classes; ++k) mean[k] += p[k];
  }
  for (double& v : mean) v /= static_cast<double>(utterance_preds.size());
  return nn::SoftLabel(std::move(mean));
}

nn::SoftLabel update_dhl(const nn::SoftLabel& pred) {
  return nn::SoftLabel::one_hot(pred.argmax(), pred.size());
}

std::vector<SegmentLabelState> init_noisy_labels(const SegmentCorpus& corpus,
                                                 std::span<const std::size_t> utterances) {
  std::vector<SegmentLabelState> states;
  for (std::size_t u : utterances) {
    const auto& utt = corpus.utterances.at(u);
    if (!utt.label) throw DataError("utterance " + utt.utterance_id + " has no class label");
    const nn::SoftLabel noisy = nn::SoftLabel::one_hot(*utt.label, corpus.num_classes);
    for (std::size_t s : utt.segments) states.push_back({s, noisy, noisy, {}});
  }
  return states;
}

std::vector<SegmentLabelState> init_noisy_labels(const SegmentCorpus& corpus) {
  std::vector<std::size_t> all(corpus.utterances.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return init_noisy_labels(corpus, all);
}

BackboneFactory reference_cnn_factory(const SegmentCorpus& corpus) {
  nn::CnnArchitecture arch;
  arch.height = corpus.n_mels;
  arch.width = corpus.seg_len;
  arch.classes = corpus.num_classes;
  return [arch](std::uint64_t seed) { return std::make_unique<nn::ReferenceCnn>(arch, seed); };
}

std::vector<nn::SoftLabel> predict_segments(const nn::Backbone& model, const SegmentCorpus& corpus,
                                            std::span<const std::size_t> segments) {
  std::vector<nn::SoftLabel> preds;
  preds.reserve(segments.size());
  for (std::size_t s : segments) preds.push_back(model.predict_proba(corpus.segments.at(s).view()));
  return preds;
}

namespace {

std::vector<nn::SoftLabel> relabel(const SegmentCorpus& corpus, const LabelUpdateRule& rule,
                                   std::size_t round, const std::vector<SegmentLabelState>& labels,
                                   const std::vector<nn::SoftLabel>& preds) {
  std::vector<nn::SoftLabel> targets(labels.size());
  switch (rule.kind) {
    case RuleKind::kBdsl:
      for (std::size_t i = 0; i < labels.size(); ++i) targets[i] = update_bdsl(preds[i]);
      break;
    case RuleKind::kWdsl: {
      const double alpha = effective_alpha(rule, round);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        targets[i] = update_wdsl(preds[i], labels[i].noisy, alpha);
      }
      break;
    }
    case RuleKind::kDhl:
      for (std::size_t i = 0; i < labels.size(); ++i) targets[i] = update_dhl(preds[i]);
      break;
    case RuleKind::kGsl: {
      // Training segments of one utterance are contiguous in `labels`.
      std::size_t begin = 0;
      while (begin < labels.size()) {
        const std::size_t utt = corpus.utterance_of(labels[begin].segment);
        std::size_t end = begin;
        while (end < labels.size() && corpus.utterance_of(labels[end].segment) == utt) ++end;
        const nn::SoftLabel global = update_gsl(
            std::span<const nn::SoftLabel>(preds).subspan(begin, end - begin));
        for (std::size_t i = begin; i < end; ++i) targets[i] = global;
        begin = end;
      }
      break;
    }
  }
  return targets;
}

}  // namespace

DslRunState run_dsl(const SegmentCorpus& corpus, std::span<const std::size_t> training_utterances,
                    const DslConfig& cfg) {
  if (cfg.iterations > 0) cfg.rule.validate();
  const BackboneFactory factory = cfg.factory ? cfg.factory : reference_cnn_factory(corpus);

  DslRunState state;
  state.training_utterances.assign(training_utterances.begin(), training_utterances.end());
  state.labels = init_noisy_labels(corpus, training_utterances);
  if (state.labels.empty()) throw DataError("self-learning run has no training segments");

  std::vector<std::size_t> segment_ids;
  segment_ids.reserve(state.labels.size());
  for (const auto& l : state.labels) segment_ids.push_back(l.segment);

  std::vector<nn::SoftLabel> preds;
  for (std::size_t t = 0; t <= cfg.iterations; ++t) {
    if (t > 0) {
      const auto targets = relabel(corpus, cfg.rule, t - 1, state.labels, preds);
      for (std::size_t i = 0; i < targets.size(); ++i) state.labels[i].current = targets[i];
    }
    LabelSnapshot snapshot;
    snapshot.iteration = t;
    snapshot.segments = segment_ids;
    for (auto& l : state.labels) {
      l.history.push_back(l.current);
      snapshot.targets.push_back(l.current);
    }

    std::vector<nn::TrainingExample> examples;
    examples.reserve(state.labels.size());
    for (const auto& l : state.labels) {
      examples.push_back({corpus.segments[l.segment].view(), &l.current,
                          corpus.utterance_of(l.segment)});
    }

    std::unique_ptr<nn::Backbone> model;
    if (cfg.warm_start && t > 0) {
      model = state.models.back()->clone();
    } else {
      model = factory(derive_seed(cfg.train.seed, 100, t));
    }
    nn::TrainConfig train_cfg = cfg.train;
    train_cfg.seed = derive_seed(cfg.train.seed, 200, t);
    state.logs.push_back(nn::train(*model, examples, train_cfg));

    preds = predict_segments(*model, corpus, segment_ids);
    IterationDiagnostics diag;
    diag.iteration = t;
    diag.epochs = state.logs.back().epochs.size();
    double entropy_sum = 0.0;
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      entropy_sum += nn::entropy(preds[i]);
      if (state.labels[i].current.argmax() != state.labels[i].noisy.argmax()) ++flipped;
    }
    diag.mean_entropy = entropy_sum / static_cast<double>(preds.size());
    diag.flipped_fraction = static_cast<double>(flipped) / static_cast<double>(preds.size());

    state.diagnostics.push_back(diag);
    state.snapshots.push_back(std::move(snapshot));
    state.models.push_back(std::move(model));
    state.iteration = t;
  }
  return state;
}

void write_label_snapshot(std::ostream& out, const SegmentCorpus& corpus,
                          const LabelSnapshot& snapshot, const LabelUpdateRule& rule,
                          std::optional<double> alpha) {
  out << "# iteration=" << snapshot.iteration << " rule=" << to_string(rule.kind) << " alpha=";
  if (alpha) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", *alpha);
    out << buf;
  } else {
    out << "none";
  }
  out << '\n' << "segment_id,utterance_id";
  for (std::size_t k = 0; k < corpus.num_classes; ++k) out << ",p" << k;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < snapshot.segments.size(); ++i) {
    const auto& seg = corpus.segments[snapshot.segments[i]];
    out << seg.segment_id << ',' << seg.utterance_id;
    for (double p : snapshot.targets[i].probs()) {
      std::snprintf(buf, sizeof buf, "%.9g", p);
      out << ',' << buf;
    }
    out << '\n';
  }
}

SnapshotFile read_label_snapshot(std::istream& in) {
  SnapshotFile file;
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) {
    throw DataError("label snapshot: missing header line");
  }
  std::istringstream header(line.substr(2));
  std::string field;
  while (header >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "iteration") file.iteration = std::stoul(value);
    if (key == "rule") file.rule = value;
    if (key == "alpha") file.alpha = value;
  }
  if (!std::getline(in, line)) throw DataError("label snapshot: missing column header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    SnapshotRow r;
    std::getline(row, r.segment_id, ',');
    std::getline(row, r.utterance_id, ',');
    std::string cell;
    while (std::getline(row, cell, ',')) r.probs.push_back(std::stod(cell));
    file.rows.push_back(std::move(r));
  }
  return file;
}

}  // namespace segdsl::dsl
