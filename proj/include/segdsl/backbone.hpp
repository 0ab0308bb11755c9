#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "segdsl/soft_label.hpp"

namespace segdsl::nn {

// Per-row (mel band) standardization fitted on training segments and stored
// with the model. An empty normalizer is the identity.
struct FeatureNormalizer {
  std::vector<double> mean;
  std::vector<double> inv_std;

  bool empty() const { return mean.empty(); }

  // Statistics over every cell of every matrix, pooled per row.
  static FeatureNormalizer fit(std::span<const std::span<const float>> matrices, std::size_t rows,
                               std::size_t cols);

  void apply(std::span<const float> in, std::span<double> out, std::size_t cols) const;
};

// Pluggable segment classifier. Implementations own a flat double parameter
// vector and provide forward/backward for one (already normalized) example;
// the trainer and the self-learning loop only talk to this interface.
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual std::size_t input_height() const = 0;
  virtual std::size_t input_width() const = 0;

  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;

  // Fresh random initialization; also clears nothing else (normalizer kept).
  virtual void initialize(std::uint64_t seed) = 0;
  virtual std::unique_ptr<Backbone> clone() const = 0;

  virtual void forward(std::span<const double> input, std::span<double> logits) const = 0;

  // Adds d loss / d theta for one example into grad and returns the loss,
  // where loss = soft cross-entropy of softmax(logits) against target.
  virtual double backward(std::span<const double> input, const SoftLabel& target,
                          std::span<double> grad) const = 0;

  const FeatureNormalizer& normalizer() const { return normalizer_; }
  void set_normalizer(FeatureNormalizer normalizer) { normalizer_ = std::move(normalizer); }

  std::size_t input_size() const { return input_height() * input_width(); }

  // Normalizes raw features into the model's input space.
  void prepare_input(std::span<const float> features, std::span<double> out) const;

  // Softmax output for one raw segment matrix. Throws SizeError on shape
  // mismatch. Read-only; safe to call concurrently.
  SoftLabel predict_proba(std::span<const float> features) const;

 private:
  FeatureNormalizer normalizer_;
};

// Layer sizes of the reference network:
//   conv 3x3 (valid) -> ReLU -> max-pool 2x2
//   conv 3x3 (valid) -> ReLU -> max-pool 2x2
//   average over the time axis (frequency rows kept) -> dense K -> softmax
struct CnnArchitecture {
  std::size_t height = 64;
  std::size_t width = 32;
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
  std::size_t classes = 2;

  void validate() const;

  std::size_t conv1_h() const { return height - 2; }
  std::size_t conv1_w() const { return width - 2; }
  std::size_t pool1_h() const { return conv1_h() / 2; }
  std::size_t pool1_w() const { return conv1_w() / 2; }
  std::size_t conv2_h() const { return pool1_h() - 2; }
  std::size_t conv2_w() const { return pool1_w() - 2; }
  std::size_t pool2_h() const { return conv2_h() / 2; }
  std::size_t pool2_w() const { return conv2_w() / 2; }
  std::size_t feature_size() const { return conv2_channels * pool2_h(); }
  std::size_t parameter_count() const;

  friend bool operator==(const CnnArchitecture&, const CnnArchitecture&) = default;
};

class ReferenceCnn final : public Backbone {
 public:
  explicit ReferenceCnn(CnnArchitecture arch, std::uint64_t seed = 0);

  std::string kind() const override { return "reference_cnn"; }
  std::size_t num_classes() const override { return arch_.classes; }
  std::size_t input_height() const override { return arch_.height; }
  std::size_t input_width() const override { return arch_.width; }

  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }

  void initialize(std::uint64_t seed) override;
  std::unique_ptr<Backbone> clone() const override;

  void forward(std::span<const double> input, std::span<double> logits) const override;
  double backward(std::span<const double> input, const SoftLabel& target,
                  std::span<double> grad) const override;

  const CnnArchitecture& architecture() const { return arch_; }

  // Views into the flat parameter vector.
  std::span<double> dense_weights();
  std::span<double> dense_bias();

 private:
  struct Activations;
  void run_forward(std::span<const double> input, Activations& act) const;

  CnnArchitecture arch_;
  std::vector<double> params_;
  std::size_t off_w1_, off_b1_, off_w2_, off_b2_, off_wd_, off_bd_;
};

// "SEGM" checkpoint: header, kind string, architecture (5 x u32),
// normalizer (rows u32 + 2 x rows f64), parameter count (u64), f64 params.
void save_model(const std::filesystem::path& path, const ReferenceCnn& model);
ReferenceCnn load_model(const std::filesystem::path& path);

}  // namespace segdsl::nn
