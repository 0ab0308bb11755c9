#pragma once

// Small in-memory corpora and networks for exercising the training loop.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "segdsl/backbone.hpp"
#include "segdsl/corpus.hpp"
#include "segdsl/dsl.hpp"
#include "segdsl/random.hpp"

namespace toy {

inline segdsl::nn::CnnArchitecture tiny_arch(std::size_t classes) {
  segdsl::nn::CnnArchitecture a;
  a.height = 16;
  a.width = 12;
  a.conv1_channels = 2;
  a.conv2_channels = 3;
  a.classes = classes;
  return a;
}

// 16 x 12 segments; each lights a band of rows chosen by its utterance label.
inline segdsl::SegmentCorpus corpus(const std::vector<std::size_t>& labels,
                                    std::size_t per_utt, std::size_t k, std::uint64_t seed) {
  segdsl::Rng rng(seed);
  std::vector<segdsl::dsp::SegmentFeatures> segs;
  std::map<std::string, std::size_t> label_map;
  const std::size_t band = std::max<std::size_t>(1, 16 / k);
  for (std::size_t u = 0; u < labels.size(); ++u) {
    const std::string id = "u" + std::to_string(u);
    label_map[id] = labels[u];
    for (std::size_t s = 0; s < per_utt; ++s) {
      segdsl::dsp::SegmentFeatures f;
      f.utterance_id = id;
      f.segment_id = segdsl::dsp::make_segment_id(id, s);
      f.index_in_utterance = static_cast<std::uint32_t>(s);
      f.start_frame = static_cast<std::uint32_t>(s);
      f.n_mels = 16;
      f.seg_len = 12;
      f.matrix.resize(16 * 12);
      for (std::size_t r = 0; r < 16; ++r) {
        const bool lit = r / band == labels[u];
        for (std::size_t c = 0; c < 12; ++c) {
          f.matrix[r * 12 + c] = static_cast<float>((lit ? 2.0 : 0.0) + rng.normal());
        }
      }
      segs.push_back(std::move(f));
    }
  }
  return segdsl::SegmentCorpus::assemble(std::move(segs), label_map, k);
}

// Utterance u has label u % k.
inline segdsl::SegmentCorpus corpus(std::size_t utterances, std::size_t per_utt, std::size_t k,
                                    std::uint64_t seed) {
  std::vector<std::size_t> labels;
  for (std::size_t u = 0; u < utterances; ++u) labels.push_back(u % k);
  return corpus(labels, per_utt, k, seed);
}

inline segdsl::dsl::DslConfig config(std::size_t k, segdsl::dsl::LabelUpdateRule rule,
                                     std::size_t iterations, std::size_t epochs = 3) {
  segdsl::dsl::DslConfig cfg;
  cfg.rule = rule;
  cfg.iterations = iterations;
  cfg.train.max_epochs = epochs;
  cfg.train.batch_size = 16;
  cfg.train.initial_lr = 0.01;
  cfg.train.seed = 5;
  cfg.factory = [k](std::uint64_t seed) -> std::unique_ptr<segdsl::nn::Backbone> {
    return std::make_unique<segdsl::nn::ReferenceCnn>(tiny_arch(k), seed);
  };
  return cfg;
}

}  // namespace toy
