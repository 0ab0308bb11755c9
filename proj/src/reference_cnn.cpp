#include "segdsl/backbone.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "segdsl/binary_io.hpp"
#include "segdsl/error.hpp"
#include "segdsl/random.hpp"

namespace segdsl::nn {
namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kTaps = kKernel * kKernel;

// Patch matrix for a valid 3x3 correlation: row (ci * 9 + tap) holds the
// input pixels under that tap for every output position.
void im2col3x3(const double* in, std::size_t cin, std::size_t h, std::size_t w, double* cols) {
  const std::size_t oh = h - 2, ow = w - 2;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t ky = 0; ky < kKernel; ++ky) {
      for (std::size_t kx = 0; kx < kKernel; ++kx) {
        double* dst = cols + (ci * kTaps + ky * kKernel + kx) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const double* row = in + ci * h * w + (y + ky) * w + kx;
          std::copy(row, row + ow, dst + y * ow);
        }
      }
    }
  }
}

void col2im3x3(const double* cols, std::size_t cin, std::size_t h, std::size_t w, double* out) {
  const std::size_t oh = h - 2, ow = w - 2;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    for (std::size_t ky = 0; ky < kKernel; ++ky) {
      for (std::size_t kx = 0; kx < kKernel; ++kx) {
        const double* src = cols + (ci * kTaps + ky * kKernel + kx) * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          double* row = out + ci * h * w + (y + ky) * w + kx;
          const double* s = src + y * ow;
          for (std::size_t x = 0; x < ow; ++x) row[x] += s[x];
        }
      }
    }
  }
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// out (rows x n) += a (rows x taps) * b (taps x n).
void gemm_acc(const double* a, std::size_t rows, std::size_t taps, const double* b, std::size_t n,
              double* out) {
  MutMap(out, rows, n).noalias() += ConstMap(a, rows, taps) * ConstMap(b, taps, n);
}

// out (rows x taps) += g (rows x n) * b^T (b: taps x n).
void gemm_nt_acc(const double* g, std::size_t rows, const double* b, std::size_t taps, std::size_t n,
                 double* out) {
  MutMap(out, rows, taps).noalias() += ConstMap(g, rows, n) * ConstMap(b, taps, n).transpose();
}

// out (taps x n) += a^T * g (a: rows x taps, g: rows x n).
void gemm_tn_acc(const double* a, std::size_t rows, std::size_t taps, const double* g, std::size_t n,
                 double* out) {
  MutMap(out, taps, n).noalias() += ConstMap(a, rows, taps).transpose() * ConstMap(g, rows, n);
}

// out[co] = bias[co] + sum_ci w[co][ci] (*) in[ci], valid 3x3 correlation.
// `cols` receives the patch matrix (cin * 9 rows of (h-2)*(w-2)).
void conv3x3(const double* in, std::size_t cin, std::size_t h, std::size_t w, const double* weights,
             const double* bias, std::size_t cout, double* out, double* cols) {
  const std::size_t n = (h - 2) * (w - 2);
  im2col3x3(in, cin, h, w, cols);
  for (std::size_t co = 0; co < cout; ++co) std::fill(out + co * n, out + (co + 1) * n, bias[co]);
  gemm_acc(weights, cout, cin * kTaps, cols, n, out);
}

// Accumulates weight/bias gradients and (optionally) the input gradient from
// the patch matrix saved by the forward pass.
void conv3x3_backward(const double* cols, std::size_t cin, std::size_t h, std::size_t w,
                      const double* weights, std::size_t cout, const double* dout,
                      double* dweights, double* dbias, double* din) {
  const std::size_t n = (h - 2) * (w - 2);
  const std::size_t taps = cin * kTaps;
  for (std::size_t co = 0; co < cout; ++co) {
    const double* g = dout + co * n;
    double bsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) bsum += g[i];
    dbias[co] += bsum;
  }
  gemm_nt_acc(dout, cout, cols, taps, n, dweights);
  if (din == nullptr) return;
  thread_local std::vector<double> dcols;
  dcols.assign(taps * n, 0.0);
  gemm_tn_acc(weights, cout, taps, dout, n, dcols.data());
  col2im3x3(dcols.data(), cin, h, w, din);
}

// 2x2 max-pool with floor; records the flat source index of each maximum.
void maxpool2x2(const double* in, std::size_t channels, std::size_t h, std::size_t w, double* out,
                std::uint32_t* argmax) {
  const std::size_t oh = h / 2, ow = w / 2;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = in + c * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = (2 * y) * w + 2 * x;
        const std::size_t candidates[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t cand : candidates) {
          if (src[cand] > src[best]) best = cand;
        }
        const std::size_t o = (c * oh + y) * ow + x;
        out[o] = src[best];
        argmax[o] = static_cast<std::uint32_t>(c * h * w + best);
      }
    }
  }
}

void relu_inplace(std::vector<double>& v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

}  // namespace

FeatureNormalizer FeatureNormalizer::fit(std::span<const std::span<const float>> matrices,
                                         std::size_t rows, std::size_t cols) {
  FeatureNormalizer norm;
  norm.mean.assign(rows, 0.0);
  norm.inv_std.assign(rows, 1.0);
  if (matrices.empty()) return norm;
  std::vector<double> sum(rows, 0.0), sum_sq(rows, 0.0);
  for (const auto& m : matrices) {
    if (m.size() != rows * cols) throw SizeError("normalizer: matrix shape mismatch");
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double v = m[r * cols + c];
        sum[r] += v;
        sum_sq[r] += v * v;
      }
    }
  }
  const double n = static_cast<double>(matrices.size() * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    norm.mean[r] = sum[r] / n;
    const double var = std::max(sum_sq[r] / n - norm.mean[r] * norm.mean[r], 0.0);
    norm.inv_std[r] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  }
  return norm;
}

void FeatureNormalizer::apply(std::span<const float> in, std::span<double> out,
                              std::size_t cols) const {
  if (empty()) {
    std::copy(in.begin(), in.end(), out.begin());
    return;
  }
  const std::size_t rows = mean.size();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out[r * cols + c] = (static_cast<double>(in[r * cols + c]) - mean[r]) * inv_std[r];
    }
  }
}

void Backbone::prepare_input(std::span<const float> features, std::span<double> out) const {
  if (features.size() != input_size() || out.size() != input_size()) {
    throw SizeError("segment of " + std::to_string(features.size()) + " cells does not match " +
                    std::to_string(input_height()) + "x" + std::to_string(input_width()) +
                    " model input");
  }
  if (!normalizer_.empty() && normalizer_.mean.size() != input_height()) {
    throw SizeError("normalizer rows do not match model input height");
  }
  normalizer_.apply(features, out, input_width());
}

SoftLabel Backbone::predict_proba(std::span<const float> features) const {
  std::vector<double> input(input_size());
  prepare_input(features, input);
  std::vector<double> logits(num_classes());
  forward(input, logits);
  return softmax(logits);
}

void CnnArchitecture::validate() const {
  if (classes < 2) throw ConfigError("network needs at least 2 classes");
  if (conv1_channels == 0 || conv2_channels == 0) throw ConfigError("channel counts must be >= 1");
  if (height < 10 || width < 10) {
    throw ConfigError("input " + std::to_string(height) + "x" + std::to_string(width) +
                      " too small for two conv/pool stages (need >= 10x10)");
  }
}

std::size_t CnnArchitecture::parameter_count() const {
  return conv1_channels * kTaps + conv1_channels + conv2_channels * conv1_channels * kTaps +
         conv2_channels + classes * feature_size() + classes;
}

struct ReferenceCnn::Activations {
  std::vector<double> cols1, r1, p1, cols2, r2, p2, feat;
  std::vector<std::uint32_t> idx1, idx2;
  std::vector<double> logits;
};

ReferenceCnn::ReferenceCnn(CnnArchitecture arch, std::uint64_t seed) : arch_(arch) {
  arch_.validate();
  off_w1_ = 0;
  off_b1_ = off_w1_ + arch_.conv1_channels * kTaps;
  off_w2_ = off_b1_ + arch_.conv1_channels;
  off_b2_ = off_w2_ + arch_.conv2_channels * arch_.conv1_channels * kTaps;
  off_wd_ = off_b2_ + arch_.conv2_channels;
  off_bd_ = off_wd_ + arch_.classes * arch_.feature_size();
  params_.assign(arch_.parameter_count(), 0.0);
  initialize(seed);
}

void ReferenceCnn::initialize(std::uint64_t seed) {
  // He-style uniform fan-in scaling, zero biases.
  Rng rng(seed);
  auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) params_[offset + i] = rng.uniform(-limit, limit);
  };
  std::fill(params_.begin(), params_.end(), 0.0);
  fill(off_w1_, off_b1_ - off_w1_, kTaps);
  fill(off_w2_, off_b2_ - off_w2_, kTaps * arch_.conv1_channels);
  fill(off_wd_, off_bd_ - off_wd_, arch_.feature_size());
}

std::unique_ptr<Backbone> ReferenceCnn::clone() const { return std::make_unique<ReferenceCnn>(*this); }

std::span<double> ReferenceCnn::dense_weights() {
  return std::span<double>(params_).subspan(off_wd_, off_bd_ - off_wd_);
}

std::span<double> ReferenceCnn::dense_bias() {
  return std::span<double>(params_).subspan(off_bd_, arch_.classes);
}

void ReferenceCnn::run_forward(std::span<const double> input, Activations& act) const {
  const auto& a = arch_;
  if (input.size() != a.height * a.width) throw SizeError("network input size mismatch");
  const double* p = params_.data();

  act.r1.resize(a.conv1_channels * a.conv1_h() * a.conv1_w());
  act.cols1.resize(kTaps * a.conv1_h() * a.conv1_w());
  conv3x3(input.data(), 1, a.height, a.width, p + off_w1_, p + off_b1_, a.conv1_channels,
          act.r1.data(), act.cols1.data());
  relu_inplace(act.r1);

  act.p1.resize(a.conv1_channels * a.pool1_h() * a.pool1_w());
  act.idx1.resize(act.p1.size());
  maxpool2x2(act.r1.data(), a.conv1_channels, a.conv1_h(), a.conv1_w(), act.p1.data(),
             act.idx1.data());

  act.r2.resize(a.conv2_channels * a.conv2_h() * a.conv2_w());
  act.cols2.resize(a.conv1_channels * kTaps * a.conv2_h() * a.conv2_w());
  conv3x3(act.p1.data(), a.conv1_channels, a.pool1_h(), a.pool1_w(), p + off_w2_, p + off_b2_,
          a.conv2_channels, act.r2.data(), act.cols2.data());
  relu_inplace(act.r2);

  act.p2.resize(a.conv2_channels * a.pool2_h() * a.pool2_w());
  act.idx2.resize(act.p2.size());
  maxpool2x2(act.r2.data(), a.conv2_channels, a.conv2_h(), a.conv2_w(), act.p2.data(),
             act.idx2.data());

  // Average over time, keep frequency rows.
  const std::size_t pw = a.pool2_w();
  act.feat.assign(a.feature_size(), 0.0);
  for (std::size_t row = 0; row < act.feat.size(); ++row) {
    double s = 0.0;
    for (std::size_t x = 0; x < pw; ++x) s += act.p2[row * pw + x];
    act.feat[row] = s / static_cast<double>(pw);
  }

  act.logits.resize(a.classes);
  const std::size_t fs = a.feature_size();
  for (std::size_t k = 0; k < a.classes; ++k) {
    double z = p[off_bd_ + k];
    const double* wk = p + off_wd_ + k * fs;
    for (std::size_t j = 0; j < fs; ++j) z += wk[j] * act.feat[j];
    act.logits[k] = z;
  }
}

void ReferenceCnn::forward(std::span<const double> input, std::span<double> logits) const {
  thread_local Activations act;
  run_forward(input, act);
  std::copy(act.logits.begin(), act.logits.end(), logits.begin());
}

double ReferenceCnn::backward(std::span<const double> input, const SoftLabel& target,
                              std::span<double> grad) const {
  const auto& a = arch_;
  if (target.size() != a.classes) throw SizeError("target has wrong number of classes");
  if (grad.size() != params_.size()) throw SizeError("gradient buffer size mismatch");
  thread_local Activations act;
  run_forward(input, act);
  const SoftLabel prob = softmax(act.logits);
  const double loss = soft_cross_entropy(target, prob);

  const double* p = params_.data();
  double* g = grad.data();
  const std::size_t fs = a.feature_size();

  // d loss / d logits = softmax - target (targets sum to one).
  std::vector<double> dz(a.classes);
  for (std::size_t k = 0; k < a.classes; ++k) dz[k] = prob[k] - target[k];

  std::vector<double> dfeat(fs, 0.0);
  for (std::size_t k = 0; k < a.classes; ++k) {
    g[off_bd_ + k] += dz[k];
    double* gw = g + off_wd_ + k * fs;
    const double* wk = p + off_wd_ + k * fs;
    for (std::size_t j = 0; j < fs; ++j) {
      gw[j] += dz[k] * act.feat[j];
      dfeat[j] += wk[j] * dz[k];
    }
  }

  // Time average, then unpool into the ReLU output (zero where inactive).
  const std::size_t pw = a.pool2_w();
  std::vector<double> dr2(act.r2.size(), 0.0);
  for (std::size_t row = 0; row < fs; ++row) {
    const double share = dfeat[row] / static_cast<double>(pw);
    for (std::size_t x = 0; x < pw; ++x) {
      const std::uint32_t src = act.idx2[row * pw + x];
      if (act.r2[src] > 0.0) dr2[src] += share;
    }
  }

  std::vector<double> dp1(act.p1.size(), 0.0);
  conv3x3_backward(act.cols2.data(), a.conv1_channels, a.pool1_h(), a.pool1_w(), p + off_w2_,
                   a.conv2_channels, dr2.data(), g + off_w2_, g + off_b2_, dp1.data());

  std::vector<double> dr1(act.r1.size(), 0.0);
  for (std::size_t i = 0; i < dp1.size(); ++i) {
    const std::uint32_t src = act.idx1[i];
    if (act.r1[src] > 0.0) dr1[src] += dp1[i];
  }

  conv3x3_backward(act.cols1.data(), 1, a.height, a.width, p + off_w1_, a.conv1_channels, dr1.data(),
                   g + off_w1_, g + off_b1_, nullptr);
  return loss;
}

void save_model(const std::filesystem::path& path, const ReferenceCnn& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot create model checkpoint " + path.string());
  io::write_header(out, "SEGM", 1);
  io::write_string(out, model.kind());
  const auto& a = model.architecture();
  for (std::size_t v : {a.height, a.width, a.conv1_channels, a.conv2_channels, a.classes}) {
    io::write_u32(out, static_cast<std::uint32_t>(v));
  }
  const auto& norm = model.normalizer();
  io::write_u32(out, static_cast<std::uint32_t>(norm.mean.size()));
  for (double v : norm.mean) io::write_f64(out, v);
  for (double v : norm.inv_std) io::write_f64(out, v);
  io::write_u64(out, model.parameters().size());
  for (double v : model.parameters()) io::write_f64(out, v);
  if (!out) throw DataError("failed writing model checkpoint " + path.string());
}

ReferenceCnn load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model checkpoint " + path.string());
  io::read_header(in, "SEGM", 1);
  const std::string kind = io::read_string(in);
  if (kind != "reference_cnn") throw DataError(path.string() + ": unknown model kind " + kind);
  CnnArchitecture a;
  a.height = io::read_u32(in);
  a.width = io::read_u32(in);
  a.conv1_channels = io::read_u32(in);
  a.conv2_channels = io::read_u32(in);
  a.classes = io::read_u32(in);
  ReferenceCnn model(a);
  FeatureNormalizer norm;
  const std::uint32_t rows = io::read_u32(in);
  norm.mean.resize(rows);
  norm.inv_std.resize(rows);
  for (double& v : norm.mean) v = io::read_f64(in);
  for (double& v : norm.inv_std) v = io::read_f64(in);
  model.set_normalizer(std::move(norm));
  const std::uint64_t count = io::read_u64(in);
  if (count != model.parameters().size()) {
    throw DataError(path.string() + ": parameter count does not match architecture");
  }
  for (double& v : model.parameters()) v = io::read_f64(in);
  return model;
}

}  // namespace segdsl::nn
