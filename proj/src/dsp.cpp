#include "nudge/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "nudge/errors.hpp"

namespace nudge::dsp {

namespace {

bool in_range(double s) { return s >= -1.0 && s <= 1.0; }  // false for NaN

std::size_t first_out_of_range(std::span<const double> samples) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!in_range(samples[i])) return i;
  }
  return samples.size();
}

std::vector<double> hamming(std::size_t n) {
  std::vector<double> w(n);
  if (n == 1) {
    w[0] = 1.0;
    return w;
  }
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n - 1));
  }
  return w;
}

}  // namespace

void validate_chunk(const AudioChunk& chunk) {
  if (chunk.samples.size() != kChunkSamples) {
    throw RangeError("audio chunk must hold exactly 16000 samples, got " +
                     std::to_string(chunk.samples.size()));
  }
  const std::size_t bad = first_out_of_range(chunk.samples);
  if (bad != chunk.samples.size()) {
    throw RangeError("audio sample " + std::to_string(bad) + " outside [-1, 1]");
  }
}

std::vector<AudioChunk> Chunker::push(std::span<const double> samples) {
  const std::size_t bad = first_out_of_range(samples);
  if (bad != samples.size()) {
    throw RangeError("capture sample " + std::to_string(bad) +
                     " outside [-1, 1]; check capture configuration");
  }

  std::vector<AudioChunk> out;
  std::size_t pos = 0;
  while (pos < samples.size()) {
    const std::size_t take = std::min(kChunkSamples - carry_.size(), samples.size() - pos);
    carry_.insert(carry_.end(), samples.begin() + static_cast<std::ptrdiff_t>(pos),
                  samples.begin() + static_cast<std::ptrdiff_t>(pos + take));
    pos += take;
    if (carry_.size() == kChunkSamples) {
      AudioChunk chunk;
      chunk.samples = std::move(carry_);
      chunk.seq_no = next_seq_++;
      out.push_back(std::move(chunk));
      carry_ = {};
      carry_.reserve(kChunkSamples);
    }
  }
  return out;
}

std::vector<AudioChunk> chunk_audio(std::span<const double> stream) {
  Chunker chunker;
  return chunker.push(stream);
}

double compute_loudness(std::span<const double> samples) {
  if (samples.empty()) return kLoudnessFloorDbfs;
  double sum_sq = 0.0;
  for (double s : samples) sum_sq += s * s;
  const double rms = std::sqrt(sum_sq / static_cast<double>(samples.size()));
  if (rms <= 0.0) return kLoudnessFloorDbfs;
  return std::clamp(20.0 * std::log10(rms), kLoudnessFloorDbfs, 0.0);
}

double compute_loudness(const AudioChunk& chunk) { return compute_loudness(chunk.samples); }

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterBank::MelFilterBank(const MfccConfig& cfg) : n_bins_(cfg.fft_size / 2 + 1) {
  const std::size_t m = cfg.n_filters;
  const double mel_lo = hz_to_mel(cfg.low_hz);
  const double mel_hi = hz_to_mel(cfg.high_hz);

  // m + 2 equally spaced mel points give m overlapping triangles.
  std::vector<double> edges_hz(m + 2);
  for (std::size_t i = 0; i < m + 2; ++i) {
    edges_hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                         static_cast<double>(m + 1));
  }
  centers_hz_.assign(edges_hz.begin() + 1, edges_hz.end() - 1);

  weights_.assign(m * n_bins_, 0.0);
  const double bin_hz = static_cast<double>(kSampleRate) / static_cast<double>(cfg.fft_size);
  for (std::size_t f = 0; f < m; ++f) {
    const double lo = edges_hz[f];
    const double mid = edges_hz[f + 1];
    const double hi = edges_hz[f + 2];
    for (std::size_t k = 0; k < n_bins_; ++k) {
      const double hz = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (hz > lo && hz <= mid) {
        w = (hz - lo) / (mid - lo);
      } else if (hz > mid && hz < hi) {
        w = (hi - hz) / (hi - mid);
      }
      weights_[f * n_bins_ + k] = w;
    }
  }
}

void MelFilterBank::apply(std::span<const double> magnitude, std::span<double> energies) const {
  for (std::size_t f = 0; f < n_filters(); ++f) {
    const double* w = &weights_[f * n_bins_];
    double e = 0.0;
    for (std::size_t k = 0; k < n_bins_; ++k) e += w[k] * magnitude[k];
    energies[f] = e;
  }
}

void fft_inplace(std::vector<std::complex<double>>& data) {
  const std::size_t n = data.size();
  if (n == 0 || (n & (n - 1)) != 0) throw DimensionError("fft size must be a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Twiddles computed directly rather than by recurrence to keep error at ~1 ulp.
        const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(k));
        const std::complex<double> u = data[i + k];
        const std::complex<double> t = w * data[i + k + len / 2];
        data[i + k] = u + t;
        data[i + k + len / 2] = u - t;
      }
    }
  }
}

std::vector<double> dct_ii(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n == 0) throw EmptyInputError("dct_ii of an empty vector");
  std::vector<double> out(n);
  const double nd = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += v[i] * std::cos(std::numbers::pi * static_cast<double>(k) *
                             (2.0 * static_cast<double>(i) + 1.0) / (2.0 * nd));
    }
    out[k] = acc * (k == 0 ? std::sqrt(1.0 / nd) : std::sqrt(2.0 / nd));
  }
  return out;
}

std::vector<double> dct_iii(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n == 0) throw EmptyInputError("dct_iii of an empty vector");
  std::vector<double> out(n);
  const double nd = static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = v[0] * std::sqrt(1.0 / nd);
    for (std::size_t k = 1; k < n; ++k) {
      acc += v[k] * std::sqrt(2.0 / nd) *
             std::cos(std::numbers::pi * static_cast<double>(k) *
                      (2.0 * static_cast<double>(i) + 1.0) / (2.0 * nd));
    }
    out[i] = acc;
  }
  return out;
}

std::size_t frame_count(std::size_t n_samples, const MfccConfig& cfg) {
  if (n_samples < cfg.frame_length) return 0;
  return 1 + (n_samples - cfg.frame_length) / cfg.hop_length;
}

FeatureMatrix mel_energies(const AudioChunk& chunk, const MfccConfig& cfg) {
  validate_chunk(chunk);
  if (cfg.frame_length > cfg.fft_size) throw DimensionError("frame longer than fft size");

  const auto& x = chunk.samples;
  std::vector<double> emphasized(x.size());
  emphasized[0] = x[0];
  for (std::size_t i = 1; i < x.size(); ++i) emphasized[i] = x[i] - cfg.pre_emphasis * x[i - 1];

  const MelFilterBank bank(cfg);
  const std::vector<double> window = hamming(cfg.frame_length);
  const std::size_t n_frames = frame_count(x.size(), cfg);

  FeatureMatrix energies(n_frames, bank.n_filters());
  std::vector<std::complex<double>> buf(cfg.fft_size);
  std::vector<double> magnitude(bank.n_bins());

  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t start = f * cfg.hop_length;
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t i = 0; i < cfg.frame_length; ++i) buf[i] = emphasized[start + i] * window[i];
    fft_inplace(buf);
    for (std::size_t k = 0; k < magnitude.size(); ++k) magnitude[k] = std::abs(buf[k]);
    bank.apply(magnitude, energies.data().subspan(f * bank.n_filters(), bank.n_filters()));
  }
  return energies;
}

FeatureMatrix compute_mfcc(const AudioChunk& chunk, const MfccConfig& cfg) {
  const FeatureMatrix energies = mel_energies(chunk, cfg);
  const std::size_t n_filters = energies.cols();
  if (cfg.n_coeffs > n_filters) throw DimensionError("more cepstral coefficients than filters");

  FeatureMatrix out(energies.rows(), cfg.n_coeffs);
  std::vector<double> log_e(n_filters);
  for (std::size_t f = 0; f < energies.rows(); ++f) {
    for (std::size_t m = 0; m < n_filters; ++m) {
      log_e[m] = std::log(std::max(energies(f, m), cfg.log_floor));
    }
    const std::vector<double> c = dct_ii(log_e);
    for (std::size_t k = 0; k < cfg.n_coeffs; ++k) out(f, k) = c[k];
  }
  return out;
}

}  // namespace nudge::dsp
