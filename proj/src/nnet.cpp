#include "nudge/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "nudge/errors.hpp"
#include "nudge/rng.hpp"

namespace nudge::nnet {

namespace {

using Json = nlohmann::json;

std::vector<TensorInfo> make_layout(const ArchSpec& a) {
  std::vector<TensorInfo> t = {
      {"conv1.weight", {a.conv1_channels, 1, 3, 3}},
      {"conv1.bias", {a.conv1_channels}},
      {"conv2.weight", {a.conv2_channels, a.conv1_channels, 3, 3}},
      {"conv2.bias", {a.conv2_channels}},
      {"dense1.weight", {a.dense_units, a.flat_size()}},
      {"dense1.bias", {a.dense_units}},
      {"dense2.weight", {2, a.dense_units}},
      {"dense2.bias", {2}},
  };
  std::size_t offset = 0;
  for (auto& info : t) {
    info.size = std::accumulate(info.shape.begin(), info.shape.end(), std::size_t{1},
                                std::multiplies<>());
    info.offset = offset;
    offset += info.size;
  }
  return t;
}

// 3x3 convolution, stride 1, zero padding 1: output has the input's spatial size.
void conv3x3_forward(std::span<const double> in, std::size_t in_ch, std::size_t rows,
                     std::size_t cols, std::span<const double> w, std::span<const double> b,
                     std::size_t out_ch, std::span<double> out) {
  for (std::size_t o = 0; o < out_ch; ++o) {
    double* dst = &out[o * rows * cols];
    std::fill(dst, dst + rows * cols, b[o]);
    for (std::size_t i = 0; i < in_ch; ++i) {
      const double* src = &in[i * rows * cols];
      const double* k = &w[(o * in_ch + i) * 9];
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t kr = 0; kr < 3; ++kr) {
          const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r + kr) - 1;
          if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(rows)) continue;
          const double* row = src + static_cast<std::size_t>(rr) * cols;
          for (std::size_t kc = 0; kc < 3; ++kc) {
            const double kv = k[kr * 3 + kc];
            const std::size_t c_lo = kc == 0 ? 1 : 0;
            const std::size_t c_hi = kc == 2 ? cols - 1 : cols;
            for (std::size_t c = c_lo; c < c_hi; ++c) dst[r * cols + c] += kv * row[c + kc - 1];
          }
        }
      }
    }
  }
}

void conv3x3_backward(std::span<const double> in, std::size_t in_ch, std::size_t rows,
                      std::size_t cols, std::span<const double> w, std::size_t out_ch,
                      std::span<const double> dout, std::span<double> dw, std::span<double> db,
                      std::span<double> din /* may be empty */) {
  if (!din.empty()) std::fill(din.begin(), din.end(), 0.0);
  for (std::size_t o = 0; o < out_ch; ++o) {
    const double* g = &dout[o * rows * cols];
    db[o] += std::accumulate(g, g + rows * cols, 0.0);
    for (std::size_t i = 0; i < in_ch; ++i) {
      const double* src = &in[i * rows * cols];
      const double* k = &w[(o * in_ch + i) * 9];
      double* dk = &dw[(o * in_ch + i) * 9];
      double* dsrc = din.empty() ? nullptr : &din[i * rows * cols];
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t kr = 0; kr < 3; ++kr) {
          const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r + kr) - 1;
          if (rr < 0 || rr >= static_cast<std::ptrdiff_t>(rows)) continue;
          const std::size_t row_off = static_cast<std::size_t>(rr) * cols;
          for (std::size_t kc = 0; kc < 3; ++kc) {
            const std::size_t c_lo = kc == 0 ? 1 : 0;
            const std::size_t c_hi = kc == 2 ? cols - 1 : cols;
            double acc = 0.0;
            const double kv = k[kr * 3 + kc];
            for (std::size_t c = c_lo; c < c_hi; ++c) {
              const double gv = g[r * cols + c];
              acc += gv * src[row_off + c + kc - 1];
              if (dsrc) dsrc[row_off + c + kc - 1] += gv * kv;
            }
            dk[kr * 3 + kc] += acc;
          }
        }
      }
    }
  }
}

void relu_inplace(std::span<double> v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

// 2x2 max pool, stride 2, floor on odd sizes. Records the winning input index.
void maxpool_forward(std::span<const double> in, std::size_t ch, std::size_t rows,
                     std::size_t cols, std::span<double> out, std::span<std::size_t> idx) {
  const std::size_t pr = rows / 2, pc = cols / 2;
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t r = 0; r < pr; ++r) {
      for (std::size_t q = 0; q < pc; ++q) {
        std::size_t best = c * rows * cols + (2 * r) * cols + 2 * q;
        for (std::size_t dr = 0; dr < 2; ++dr) {
          for (std::size_t dc = 0; dc < 2; ++dc) {
            const std::size_t j = c * rows * cols + (2 * r + dr) * cols + 2 * q + dc;
            if (in[j] > in[best]) best = j;
          }
        }
        const std::size_t o = c * pr * pc + r * pc + q;
        out[o] = in[best];
        idx[o] = best;
      }
    }
  }
}

struct Cache {
  std::vector<double> x;
  std::vector<double> a1;
  std::vector<double> p1;
  std::vector<std::size_t> p1_idx;
  std::vector<double> a2;
  std::vector<double> p2;
  std::vector<std::size_t> p2_idx;
  std::vector<double> h;
  Probs probs;
};

void check_shape(const ArchSpec& a, const dsp::FeatureMatrix& f) {
  if (f.rows() != a.in_rows || f.cols() != a.in_cols) {
    throw DimensionError("feature matrix is " + std::to_string(f.rows()) + "x" +
                         std::to_string(f.cols()) + ", model expects " +
                         std::to_string(a.in_rows) + "x" + std::to_string(a.in_cols));
  }
}

void run_forward(const SnoreModel& m, const dsp::FeatureMatrix& f, Cache& c) {
  const ArchSpec& a = m.arch();
  check_shape(a, f);
  const std::size_t R = a.in_rows, C = a.in_cols;
  const std::size_t R2 = a.pool1_rows(), C2 = a.pool1_cols();
  const std::size_t R4 = a.pool2_rows(), C4 = a.pool2_cols();

  c.x.resize(R * C);
  const InputNorm& norm = m.input_norm();
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t q = 0; q < C; ++q) {
      double v = f(r, q);
      if (!norm.mean.empty()) v = (v - norm.mean[q]) * norm.scale[q];
      c.x[r * C + q] = v;
    }
  }

  c.a1.resize(a.conv1_channels * R * C);
  conv3x3_forward(c.x, 1, R, C, m.tensor(Tensor::Conv1Weight), m.tensor(Tensor::Conv1Bias),
                  a.conv1_channels, c.a1);
  relu_inplace(c.a1);
  c.p1.resize(a.conv1_channels * R2 * C2);
  c.p1_idx.resize(c.p1.size());
  maxpool_forward(c.a1, a.conv1_channels, R, C, c.p1, c.p1_idx);

  c.a2.resize(a.conv2_channels * R2 * C2);
  conv3x3_forward(c.p1, a.conv1_channels, R2, C2, m.tensor(Tensor::Conv2Weight),
                  m.tensor(Tensor::Conv2Bias), a.conv2_channels, c.a2);
  relu_inplace(c.a2);
  c.p2.resize(a.conv2_channels * R4 * C4);
  c.p2_idx.resize(c.p2.size());
  maxpool_forward(c.a2, a.conv2_channels, R2, C2, c.p2, c.p2_idx);

  const auto w1 = m.tensor(Tensor::Dense1Weight);
  const auto b1 = m.tensor(Tensor::Dense1Bias);
  const std::size_t flat = a.flat_size();
  c.h.resize(a.dense_units);
  for (std::size_t u = 0; u < a.dense_units; ++u) {
    double acc = b1[u];
    const double* row = &w1[u * flat];
    for (std::size_t j = 0; j < flat; ++j) acc += row[j] * c.p2[j];
    c.h[u] = acc > 0.0 ? acc : 0.0;
  }

  const auto w2 = m.tensor(Tensor::Dense2Weight);
  const auto b2 = m.tensor(Tensor::Dense2Bias);
  double z[2];
  for (std::size_t o = 0; o < 2; ++o) {
    double acc = b2[o];
    for (std::size_t u = 0; u < a.dense_units; ++u) acc += w2[o * a.dense_units + u] * c.h[u];
    z[o] = acc;
  }
  c.probs = softmax2(z[0], z[1]);
}

// Accumulates d(loss)/d(params) * weight into grad.
void run_backward(const SnoreModel& m, const Cache& c, int label, double weight,
                  std::span<double> grad, GradientFault fault) {
  const ArchSpec& a = m.arch();
  const auto& layout = m.layout();
  auto g = [&](Tensor t) {
    const auto& info = layout[static_cast<std::size_t>(t)];
    return grad.subspan(info.offset, info.size);
  };
  const std::size_t R = a.in_rows, C = a.in_cols;
  const std::size_t R2 = a.pool1_rows(), C2 = a.pool1_cols();

  // d/dz of -log(max(p_y, floor)); zero where the floor is active.
  double dz[2] = {0.0, 0.0};
  const double p_target = label == 1 ? c.probs.snore : c.probs.non_snore;
  if (p_target > kLogFloor) {
    const double diff = c.probs.snore - static_cast<double>(label);
    dz[1] = diff * weight;
    dz[0] = -diff * weight;
  }

  const auto w2 = m.tensor(Tensor::Dense2Weight);
  auto gw2 = g(Tensor::Dense2Weight);
  auto gb2 = g(Tensor::Dense2Bias);
  std::vector<double> dh(a.dense_units, 0.0);
  for (std::size_t o = 0; o < 2; ++o) {
    gb2[o] += dz[o];
    for (std::size_t u = 0; u < a.dense_units; ++u) {
      gw2[o * a.dense_units + u] += dz[o] * c.h[u];
      dh[u] += dz[o] * w2[o * a.dense_units + u];
    }
  }
  for (std::size_t u = 0; u < a.dense_units; ++u) {
    if (c.h[u] <= 0.0) dh[u] = 0.0;
  }

  const std::size_t flat = a.flat_size();
  const auto w1 = m.tensor(Tensor::Dense1Weight);
  auto gw1 = g(Tensor::Dense1Weight);
  auto gb1 = g(Tensor::Dense1Bias);
  std::vector<double> dp2(flat, 0.0);
  for (std::size_t u = 0; u < a.dense_units; ++u) {
    const double d = dh[u];
    if (d == 0.0) continue;
    gb1[u] += d;
    double* grow = &gw1[u * flat];
    const double* wrow = &w1[u * flat];
    for (std::size_t j = 0; j < flat; ++j) {
      grow[j] += d * c.p2[j];
      dp2[j] += d * wrow[j];
    }
  }

  std::vector<double> da2(c.a2.size(), 0.0);
  for (std::size_t j = 0; j < dp2.size(); ++j) da2[c.p2_idx[j]] += dp2[j];
  for (std::size_t j = 0; j < da2.size(); ++j) {
    if (c.a2[j] <= 0.0) da2[j] = 0.0;
  }

  std::vector<double> dp1(c.p1.size());
  conv3x3_backward(c.p1, a.conv1_channels, R2, C2, m.tensor(Tensor::Conv2Weight),
                   a.conv2_channels, da2, g(Tensor::Conv2Weight), g(Tensor::Conv2Bias), dp1);

  std::vector<double> da1(c.a1.size(), 0.0);
  for (std::size_t j = 0; j < dp1.size(); ++j) da1[c.p1_idx[j]] += dp1[j];
  for (std::size_t j = 0; j < da1.size(); ++j) {
    if (c.a1[j] <= 0.0) da1[j] = 0.0;
  }

  if (fault == GradientFault::FlipConvSign) {
    for (double& d : da1) d = -d;
  }
  conv3x3_backward(c.x, 1, R, C, m.tensor(Tensor::Conv1Weight), a.conv1_channels, da1,
                   g(Tensor::Conv1Weight), g(Tensor::Conv1Bias), {});
}

Json arch_to_json(const ArchSpec& a) {
  Json layers = Json::array();
  layers.push_back({{"type", "conv2d"}, {"in_channels", 1}, {"out_channels", a.conv1_channels},
                    {"kernel", {3, 3}}, {"stride", 1}, {"padding", 1},
                    {"output", {a.conv1_channels, a.in_rows, a.in_cols}}});
  layers.push_back({{"type", "relu"}});
  layers.push_back({{"type", "maxpool"}, {"size", {2, 2}},
                    {"output", {a.conv1_channels, a.pool1_rows(), a.pool1_cols()}}});
  layers.push_back({{"type", "conv2d"}, {"in_channels", a.conv1_channels},
                    {"out_channels", a.conv2_channels}, {"kernel", {3, 3}}, {"stride", 1},
                    {"padding", 1},
                    {"output", {a.conv2_channels, a.pool1_rows(), a.pool1_cols()}}});
  layers.push_back({{"type", "relu"}});
  layers.push_back({{"type", "maxpool"}, {"size", {2, 2}},
                    {"output", {a.conv2_channels, a.pool2_rows(), a.pool2_cols()}}});
  layers.push_back({{"type", "flatten"}, {"output", {a.flat_size()}}});
  layers.push_back({{"type", "dense"}, {"in", a.flat_size()}, {"out", a.dense_units}});
  layers.push_back({{"type", "relu"}});
  layers.push_back({{"type", "dense"}, {"in", a.dense_units}, {"out", 2}});
  layers.push_back({{"type", "softmax"}});
  return {{"input", {1, a.in_rows, a.in_cols}}, {"layers", layers}};
}

ArchSpec arch_from_json(const Json& j) {
  ArchSpec a;
  const auto& input = j.at("input");
  if (!input.is_array() || input.size() != 3 || input.at(0).get<std::size_t>() != 1) {
    throw CorruptModel("model input shape must be [1, rows, cols]");
  }
  a.in_rows = input.at(1).get<std::size_t>();
  a.in_cols = input.at(2).get<std::size_t>();
  const auto& layers = j.at("layers");
  static const char* kTypes[] = {"conv2d", "relu", "maxpool", "conv2d", "relu", "maxpool",
                                 "flatten", "dense", "relu", "dense", "softmax"};
  if (!layers.is_array() || layers.size() != std::size(kTypes)) {
    throw CorruptModel("unexpected layer count in model architecture");
  }
  for (std::size_t i = 0; i < std::size(kTypes); ++i) {
    if (layers.at(i).at("type").get<std::string>() != kTypes[i]) {
      throw CorruptModel("unexpected layer " + std::to_string(i) + " in model architecture");
    }
  }
  a.conv1_channels = layers.at(0).at("out_channels").get<std::size_t>();
  a.conv2_channels = layers.at(3).at("out_channels").get<std::size_t>();
  a.dense_units = layers.at(7).at("out").get<std::size_t>();
  if (layers.at(3).at("in_channels").get<std::size_t>() != a.conv1_channels ||
      layers.at(7).at("in").get<std::size_t>() != a.flat_size() ||
      layers.at(9).at("in").get<std::size_t>() != a.dense_units ||
      layers.at(9).at("out").get<std::size_t>() != 2) {
    throw CorruptModel("model layer shapes do not chain");
  }
  if (a.in_rows < 4 || a.in_cols < 4 || a.conv1_channels == 0 || a.conv2_channels == 0 ||
      a.dense_units == 0) {
    throw CorruptModel("degenerate model architecture");
  }
  return a;
}

}  // namespace

SnoreModel::SnoreModel(ArchSpec arch) : arch_(arch), layout_(make_layout(arch)) {
  const auto& last = layout_.back();
  params_.assign(last.offset + last.size, 0.0);
}

std::span<double> SnoreModel::tensor(Tensor t) noexcept {
  const auto& info = layout_[static_cast<std::size_t>(t)];
  return std::span<double>(params_).subspan(info.offset, info.size);
}

std::span<const double> SnoreModel::tensor(Tensor t) const noexcept {
  const auto& info = layout_[static_cast<std::size_t>(t)];
  return std::span<const double>(params_).subspan(info.offset, info.size);
}

SnoreModel init_weights(std::uint64_t seed, ArchSpec arch) {
  SnoreModel model(arch);
  SplitMix64 rng(seed);
  const auto fill = [&](Tensor t, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : model.tensor(t)) w = (2.0 * rng.uniform() - 1.0) * limit;
  };
  const auto c1 = static_cast<double>(arch.conv1_channels);
  const auto c2 = static_cast<double>(arch.conv2_channels);
  const auto d = static_cast<double>(arch.dense_units);
  fill(Tensor::Conv1Weight, 1.0 * 9.0, c1 * 9.0);
  fill(Tensor::Conv2Weight, c1 * 9.0, c2 * 9.0);
  fill(Tensor::Dense1Weight, static_cast<double>(arch.flat_size()), d);
  fill(Tensor::Dense2Weight, d, 2.0);
  return model;
}

Probs softmax2(double logit_non_snore, double logit_snore) {
  const double m = std::max(logit_non_snore, logit_snore);
  const double e0 = std::exp(logit_non_snore - m);
  const double e1 = std::exp(logit_snore - m);
  const double s = e0 + e1;
  return Probs{e0 / s, e1 / s};
}

double bce(const Probs& p, int label) {
  const double y = static_cast<double>(label);
  return -(y * std::log(std::max(p.snore, kLogFloor)) +
           (1.0 - y) * std::log(std::max(p.non_snore, kLogFloor)));
}

Probs forward(const SnoreModel& model, const dsp::FeatureMatrix& features) {
  Cache cache;
  run_forward(model, features, cache);
  return cache.probs;
}

double loss_and_gradient(const SnoreModel& model, std::span<const LabelledFeatures> batch,
                         std::span<double> grad, GradientFault fault) {
  if (batch.empty()) throw EmptyInputError("empty training batch");
  if (grad.size() != model.params().size()) throw DimensionError("gradient buffer size mismatch");
  std::fill(grad.begin(), grad.end(), 0.0);
  const double weight = 1.0 / static_cast<double>(batch.size());
  Cache cache;
  double loss = 0.0;
  for (const auto& ex : batch) {
    if (ex.label != 0 && ex.label != 1) throw ContractViolation("label must be 0 or 1");
    run_forward(model, ex.features, cache);
    loss += bce(cache.probs, ex.label) * weight;
    run_backward(model, cache, ex.label, weight, grad, fault);
  }
  return loss;
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw ContractViolation("lr must be positive");
  if (!(cfg.beta1 > 0.0 && cfg.beta1 < cfg.beta2 && cfg.beta2 < 1.0)) {
    throw ContractViolation("need 0 < beta1 < beta2 < 1");
  }
  if (cfg.batch_size < 1) throw ContractViolation("batch_size must be at least 1");
  if (cfg.max_epochs < 1) throw ContractViolation("max_epochs must be positive");
}

void adam_update(std::span<double> params, std::span<const double> grad, const TrainConfig& cfg,
                 AdamState& state) {
  if (grad.size() != params.size()) throw DimensionError("gradient size mismatch");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.t = 0;
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double gi = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * gi;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

double train_step(SnoreModel& model, std::span<const LabelledFeatures> batch,
                  const TrainConfig& cfg, AdamState& state) {
  std::vector<double> grad(model.params().size());
  const double loss = loss_and_gradient(model, batch, grad);
  if (!std::isfinite(loss)) throw TrainingDiverged("training loss is not finite");
  adam_update(model.params(), grad, cfg, state);
  return loss;
}

GradCheckReport gradient_check(const SnoreModel& model, const LabelledFeatures& sample,
                               const GradCheckOptions& opts) {
  SnoreModel probe = model;
  const std::span<const LabelledFeatures> batch(&sample, 1);
  std::vector<double> grad(probe.params().size());
  loss_and_gradient(probe, batch, grad, opts.fault);

  std::vector<std::size_t> indices(probe.params().size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  if (opts.n_params < indices.size()) {
    SplitMix64 rng(opts.seed);
    fisher_yates(std::span<std::size_t>(indices), rng);
    indices.resize(opts.n_params);
  }

  std::vector<double> scratch(grad.size());
  GradCheckReport report;
  for (std::size_t idx : indices) {
    double& p = probe.params()[idx];
    const double saved = p;
    p = saved + opts.h;
    const double up = loss_and_gradient(probe, batch, scratch);
    p = saved - opts.h;
    const double down = loss_and_gradient(probe, batch, scratch);
    p = saved;
    const double numeric = (up - down) / (2.0 * opts.h);
    const double analytic = grad[idx];
    const double rel =
        std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), 1e-8);
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = idx;
    }
    ++report.checked;
  }
  return report;
}

InputNorm fit_input_norm(std::span<const LabelledFeatures> data, std::size_t n_cols) {
  InputNorm norm{std::vector<double>(n_cols, 0.0), std::vector<double>(n_cols, 1.0)};
  if (data.empty()) return norm;
  std::vector<double> sum(n_cols, 0.0), sum_sq(n_cols, 0.0);
  double count = 0.0;
  for (const auto& ex : data) {
    if (ex.features.cols() != n_cols) throw DimensionError("feature width mismatch");
    for (std::size_t r = 0; r < ex.features.rows(); ++r) {
      for (std::size_t c = 0; c < n_cols; ++c) {
        const double v = ex.features(r, c);
        sum[c] += v;
        sum_sq[c] += v * v;
      }
    }
    count += static_cast<double>(ex.features.rows());
  }
  for (std::size_t c = 0; c < n_cols; ++c) {
    const double mean = sum[c] / count;
    const double var = std::max(sum_sq[c] / count - mean * mean, 0.0);
    norm.mean[c] = mean;
    norm.scale[c] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  }
  return norm;
}

std::vector<EpochStats> train(SnoreModel& model, std::span<const LabelledFeatures> data,
                              const TrainConfig& cfg,
                              const std::function<void(const EpochStats&)>& on_epoch) {
  validate(cfg);
  if (data.empty()) throw EmptyInputError("empty training set");

  AdamState state;
  std::vector<std::size_t> order(data.size());
  std::vector<LabelledFeatures> batch;
  std::vector<EpochStats> history;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(cfg.seed + epoch);
    fisher_yates(std::span<std::size_t>(order), rng);

    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      loss_sum += train_step(model, batch, cfg, state);
      ++n_batches;
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(n_batches)};
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

EvalReport evaluate(const SnoreModel& model, std::span<const LabelledFeatures> data) {
  if (data.empty()) throw EmptyInputError("cannot evaluate on an empty dataset");
  EvalReport report;
  report.predictions.reserve(data.size());
  report.p_snore.reserve(data.size());
  std::size_t correct = 0;
  for (const auto& ex : data) {
    const Probs p = forward(model, ex.features);
    const int pred = predict_label(p);
    report.predictions.push_back(pred);
    report.p_snore.push_back(p.snore);
    if (pred == ex.label) ++correct;
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return report;
}

std::string serialize_model(const SnoreModel& model) {
  Json weights = Json::object();
  for (const auto& info : model.layout()) {
    const auto span = model.params().subspan(info.offset, info.size);
    weights[info.name] = std::vector<double>(span.begin(), span.end());
  }
  Json doc = {
      {"version", kModelVersion},
      {"arch", arch_to_json(model.arch())},
      {"input_norm", {{"mean", model.input_norm().mean}, {"scale", model.input_norm().scale}}},
      {"weights", weights},
  };
  return doc.dump() + "\n";
}

void save_model(const SnoreModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open model file for writing: " + path.string());
  out << serialize_model(model);
  if (!out.flush()) throw Error("failed writing model file: " + path.string());
}

SnoreModel parse_model(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw CorruptModel(std::string("model file is not valid: ") + e.what());
  }
  try {
    if (!doc.is_object() || !doc.contains("version")) throw CorruptModel("model file has no version");
    const std::string version = doc.at("version").get<std::string>();
    if (version != kModelVersion) {
      throw UnsupportedFormat("version", "unsupported model format '" + version + "'");
    }
    SnoreModel model(arch_from_json(doc.at("arch")));
    const Json& weights = doc.at("weights");
    for (const auto& info : model.layout()) {
      const auto values = weights.at(info.name).get<std::vector<double>>();
      if (values.size() != info.size) throw CorruptModel("tensor " + info.name + " has wrong size");
      std::copy(values.begin(), values.end(), model.params().begin() + info.offset);
    }
    for (double w : model.params()) {
      if (!std::isfinite(w)) throw CorruptModel("non-finite weight");
    }
    if (doc.contains("input_norm")) {
      auto& norm = model.input_norm();
      norm.mean = doc.at("input_norm").at("mean").get<std::vector<double>>();
      norm.scale = doc.at("input_norm").at("scale").get<std::vector<double>>();
      const bool empty = norm.mean.empty() && norm.scale.empty();
      if (!empty && (norm.mean.size() != model.arch().in_cols ||
                     norm.scale.size() != model.arch().in_cols)) {
        throw CorruptModel("input_norm has wrong width");
      }
    }
    return model;
  } catch (const Json::exception& e) {
    throw CorruptModel(std::string("model file is malformed: ") + e.what());
  }
}

SnoreModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

}  // namespace nudge::nnet
