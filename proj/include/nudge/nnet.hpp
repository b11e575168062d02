#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nudge/dsp.hpp"

namespace nudge::nnet {

inline constexpr const char* kModelVersion = "snorenet-v1";

// Layer sizes of the classifier:
//   Conv(1->c1, 3x3, pad 1) ReLU MaxPool2 Conv(c1->c2, 3x3, pad 1) ReLU MaxPool2
//   Flatten Dense(->dense) ReLU Dense(->2) Softmax
struct ArchSpec {
  std::size_t in_rows = 98;
  std::size_t in_cols = 13;
  std::size_t conv1_channels = 8;
  std::size_t conv2_channels = 16;
  std::size_t dense_units = 64;

  std::size_t pool1_rows() const noexcept { return in_rows / 2; }
  std::size_t pool1_cols() const noexcept { return in_cols / 2; }
  std::size_t pool2_rows() const noexcept { return pool1_rows() / 2; }
  std::size_t pool2_cols() const noexcept { return pool1_cols() / 2; }
  std::size_t flat_size() const noexcept { return conv2_channels * pool2_rows() * pool2_cols(); }

  // Narrow variant for finite-difference checks.
  static ArchSpec reduced() { return ArchSpec{98, 13, 2, 3, 8}; }

  bool operator==(const ArchSpec&) const = default;
};

enum class Tensor : std::size_t {
  Conv1Weight, Conv1Bias, Conv2Weight, Conv2Bias,
  Dense1Weight, Dense1Bias, Dense2Weight, Dense2Bias,
};
inline constexpr std::size_t kTensorCount = 8;

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool operator==(const TensorInfo&) const = default;
};

// Per-coefficient affine applied to features before the first convolution:
// x' = (x - mean) * scale. Fitted from the training set, frozen afterwards.
struct InputNorm {
  std::vector<double> mean;
  std::vector<double> scale;
  bool operator==(const InputNorm&) const = default;
};

// All trainable parameters live in one contiguous buffer; tensor() gives
// row-major views into it.
class SnoreModel {
 public:
  explicit SnoreModel(ArchSpec arch = {});

  const ArchSpec& arch() const noexcept { return arch_; }
  const std::vector<TensorInfo>& layout() const noexcept { return layout_; }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  std::span<double> tensor(Tensor t) noexcept;
  std::span<const double> tensor(Tensor t) const noexcept;

  InputNorm& input_norm() noexcept { return norm_; }
  const InputNorm& input_norm() const noexcept { return norm_; }

  bool operator==(const SnoreModel&) const = default;

 private:
  ArchSpec arch_;
  std::vector<TensorInfo> layout_;
  std::vector<double> params_;
  InputNorm norm_;
};

// Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))) drawn in layout order
// from a single SplitMix64 stream seeded with `seed`; biases zero.
SnoreModel init_weights(std::uint64_t seed, ArchSpec arch = {});

struct Probs {
  double non_snore = 0.5;
  double snore = 0.5;
};

// Numerically stable two-way softmax.
Probs softmax2(double logit_non_snore, double logit_snore);

inline constexpr double kLogFloor = 1e-12;

// Binary cross-entropy on the snore probability, logs floored at 1e-12.
double bce(const Probs& p, int label);

// Throws DimensionError unless features are in_rows x in_cols.
Probs forward(const SnoreModel& model, const dsp::FeatureMatrix& features);

struct LabelledFeatures {
  dsp::FeatureMatrix features;
  int label = 0;  // 0 = non-snore, 1 = snore
};

// Test hook: corrupts one part of the analytic gradient.
enum class GradientFault { None, FlipConvSign };

// Mean BCE over the batch; writes the gradient of that mean into `grad`
// (same layout as model.params()).
double loss_and_gradient(const SnoreModel& model, std::span<const LabelledFeatures> batch,
                         std::span<double> grad, GradientFault fault = GradientFault::None);

struct TrainConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 20;
  std::uint64_t seed = 0;
};

// Throws ContractViolation when the invariants do not hold.
void validate(const TrainConfig& cfg);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
  bool operator==(const AdamState&) const = default;
};

// One bias-corrected Adam update of `params` given `grad`.
void adam_update(std::span<double> params, std::span<const double> grad, const TrainConfig& cfg,
                 AdamState& state);

// Forward, backward and one Adam update on a non-empty batch. Returns the
// pre-update mean loss; throws TrainingDiverged if it is not finite.
double train_step(SnoreModel& model, std::span<const LabelledFeatures> batch,
                  const TrainConfig& cfg, AdamState& state);

struct GradCheckOptions {
  std::size_t n_params = 200;
  double h = 1e-4;
  std::uint64_t seed = 0;
  GradientFault fault = GradientFault::None;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
};

// Compares the analytic gradient with central differences on randomly chosen
// parameters (all of them when n_params exceeds the count). Relative error is
// |a - n| / max(|a| + |n|, 1e-8).
GradCheckReport gradient_check(const SnoreModel& model, const LabelledFeatures& sample,
                               const GradCheckOptions& opts = {});

// Per-coefficient mean and 1/std over every frame of every sample.
InputNorm fit_input_norm(std::span<const LabelledFeatures> data, std::size_t n_cols);

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
};

// Full training run: per epoch a Fisher-Yates shuffle seeded with seed + epoch,
// then mini-batches of batch_size. Deterministic for a given seed.
std::vector<EpochStats> train(SnoreModel& model, std::span<const LabelledFeatures> data,
                              const TrainConfig& cfg,
                              const std::function<void(const EpochStats&)>& on_epoch = {});

// Label rule shared with the detector: snore iff p_snore >= 0.5.
inline int predict_label(const Probs& p) { return p.snore >= 0.5 ? 1 : 0; }

struct EvalReport {
  double accuracy = 0.0;
  std::vector<int> predictions;
  std::vector<double> p_snore;
};

// Throws EmptyInputError on an empty dataset.
EvalReport evaluate(const SnoreModel& model, std::span<const LabelledFeatures> data);

// Structured-text (JSON) model file; doubles use shortest round-trip form.
void save_model(const SnoreModel& model, const std::filesystem::path& path);
std::string serialize_model(const SnoreModel& model);
// Throws UnsupportedFormat for a foreign version tag and CorruptModel for
// anything unreadable or inconsistent.
SnoreModel load_model(const std::filesystem::path& path);
SnoreModel parse_model(const std::string& text);

}  // namespace nudge::nnet
