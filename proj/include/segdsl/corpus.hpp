#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segdsl/dsp.hpp"

namespace segdsl {

struct UtteranceEntry {
  std::string utterance_id;
  std::optional<std::size_t> label;      // class index in [0, K)
  std::vector<std::size_t> segments;     // indices into SegmentCorpus::segments, in time order
};

// Segments grouped by utterance, with utterance-level class labels.
struct SegmentCorpus {
  std::size_t num_classes = 0;
  std::size_t n_mels = 0;
  std::size_t seg_len = 0;
  std::vector<dsp::SegmentFeatures> segments;
  std::vector<UtteranceEntry> utterances;

  // Groups segments by utterance id (first-appearance order) and attaches
  // labels. Utterances missing from `labels` stay unlabeled. Throws SizeError
  // if segment shapes disagree and DomainError for out-of-range labels.
  static SegmentCorpus assemble(std::vector<dsp::SegmentFeatures> segments,
                                const std::map<std::string, std::size_t>& labels,
                                std::size_t num_classes);

  std::size_t utterance_of(std::size_t segment) const { return segment_utterance_.at(segment); }
  std::optional<std::size_t> find_utterance(const std::string& utterance_id) const;

  // Throws DataError naming the first unlabeled utterance.
  void require_labels() const;

 private:
  std::vector<std::size_t> segment_utterance_;
  std::map<std::string, std::size_t> utterance_index_;
};

}  // namespace segdsl
