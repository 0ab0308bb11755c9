#include "segdsl/corpus.hpp"

#include "segdsl/error.hpp"

namespace segdsl {

SegmentCorpus SegmentCorpus::assemble(std::vector<dsp::SegmentFeatures> segments,
                                      const std::map<std::string, std::size_t>& labels,
                                      std::size_t num_classes) {
  SegmentCorpus corpus;
  corpus.num_classes = num_classes;
  corpus.segments = std::move(segments);
  if (!corpus.segments.empty()) {
    corpus.n_mels = corpus.segments.front().n_mels;
    corpus.seg_len = corpus.segments.front().seg_len;
  }
  corpus.segment_utterance_.reserve(corpus.segments.size());
  for (std::size_t i = 0; i < corpus.segments.size(); ++i) {
    const auto& seg = corpus.segments[i];
    if (seg.n_mels != corpus.n_mels || seg.seg_len != corpus.seg_len ||
        seg.matrix.size() != corpus.n_mels * corpus.seg_len) {
      throw SizeError("segment " + seg.segment_id + " has inconsistent shape");
    }
    auto [it, inserted] = corpus.utterance_index_.try_emplace(seg.utterance_id,
                                                              corpus.utterances.size());
    if (inserted) {
      UtteranceEntry entry;
      entry.utterance_id = seg.utterance_id;
      if (auto label = labels.find(seg.utterance_id); label != labels.end()) {
        if (label->second >= num_classes) {
          throw DomainError("utterance " + seg.utterance_id + " has label " +
                            std::to_string(label->second) + " outside [0, " +
                            std::to_string(num_classes) + ")");
        }
        entry.label = label->second;
      }
      corpus.utterances.push_back(std::move(entry));
    }
    corpus.utterances[it->second].segments.push_back(i);
    corpus.segment_utterance_.push_back(it->second);
  }
  return corpus;
}

std::optional<std::size_t> SegmentCorpus::find_utterance(const std::string& utterance_id) const {
  if (auto it = utterance_index_.find(utterance_id); it != utterance_index_.end()) return it->second;
  return std::nullopt;
}

void SegmentCorpus::require_labels() const {
  for (const auto& u : utterances) {
    if (!u.label) throw DataError("utterance " + u.utterance_id + " has no class label");
  }
}

}  // namespace segdsl
