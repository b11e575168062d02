#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace nudge::dsp {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kChunkSamples = 16000;
inline constexpr double kLoudnessFloorDbfs = -120.0;

// One second of mono audio at 16 kHz, the unit of classification.
struct AudioChunk {
  std::vector<double> samples;
  std::uint64_t seq_no = 0;
};

// Throws RangeError unless the chunk holds exactly 16000 samples in [-1, 1].
void validate_chunk(const AudioChunk& chunk);

// Splits a sample stream into contiguous, non-overlapping one-second chunks.
// Trailing samples that do not fill a chunk stay buffered until the next push.
// Single-owner: one instance per capture stream.
class Chunker {
 public:
  explicit Chunker(std::uint64_t first_seq_no = 0) : next_seq_(first_seq_no) {}

  // Validates the whole span first; on an out-of-range (or NaN) sample it
  // throws RangeError and consumes nothing.
  std::vector<AudioChunk> push(std::span<const double> samples);

  std::size_t buffered() const noexcept { return carry_.size(); }
  std::uint64_t next_seq_no() const noexcept { return next_seq_; }

  // Discards the partial chunk; it is never classified.
  void discard_partial() noexcept { carry_.clear(); }

 private:
  std::vector<double> carry_;
  std::uint64_t next_seq_;
};

// Convenience wrapper: chunk a whole stream, discarding the trailing partial chunk.
std::vector<AudioChunk> chunk_audio(std::span<const double> stream);

// 20*log10(RMS), clamped to [-120, 0] dBFS.
double compute_loudness(const AudioChunk& chunk);
double compute_loudness(std::span<const double> samples);

// Row-major n_frames x n_coeffs matrix of MFCCs.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const FeatureMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct MfccConfig {
  double pre_emphasis = 0.97;
  std::size_t frame_length = 400;  // 25 ms
  std::size_t hop_length = 160;    // 10 ms
  std::size_t fft_size = 512;
  std::size_t n_filters = 26;
  double low_hz = 0.0;
  double high_hz = 8000.0;
  double log_floor = 1e-10;
  std::size_t n_coeffs = 13;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular mel filter bank over the fft_size/2 + 1 magnitude bins.
class MelFilterBank {
 public:
  explicit MelFilterBank(const MfccConfig& cfg = {});

  std::size_t n_filters() const noexcept { return centers_hz_.size(); }
  std::size_t n_bins() const noexcept { return n_bins_; }
  // Weight of filter m on spectral bin k.
  double weight(std::size_t m, std::size_t k) const { return weights_[m * n_bins_ + k]; }
  double center_hz(std::size_t m) const { return centers_hz_[m]; }
  const std::vector<double>& centers_hz() const noexcept { return centers_hz_; }

  // energies[m] = sum_k weight(m, k) * magnitude[k]
  void apply(std::span<const double> magnitude, std::span<double> energies) const;

 private:
  std::size_t n_bins_;
  std::vector<double> weights_;
  std::vector<double> centers_hz_;
};

// In-place iterative radix-2 FFT; size must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& data);

// Orthonormal DCT-II and its inverse (DCT-III). Throw EmptyInputError on N == 0.
std::vector<double> dct_ii(std::span<const double> v);
std::vector<double> dct_iii(std::span<const double> v);

// Linear mel-bank energies per frame (n_frames x n_filters), before the log.
FeatureMatrix mel_energies(const AudioChunk& chunk, const MfccConfig& cfg = {});

// Full MFCC front end: pre-emphasis, Hamming frames, magnitude spectrum, mel
// bank, floored log, orthonormal DCT-II truncated to n_coeffs.
FeatureMatrix compute_mfcc(const AudioChunk& chunk, const MfccConfig& cfg = {});

std::size_t frame_count(std::size_t n_samples, const MfccConfig& cfg = {});

}  // namespace nudge::dsp
