#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nudge/dsp.hpp"

namespace nudge::corpus {

struct LabelledSample {
  dsp::AudioChunk chunk;
  int label = 0;  // 0 non-snore, 1 snore
  std::string source_id;
};

// Ambient classes used for the non-snore half of the synthetic corpus.
enum class Ambient {
  BabyCrying, ClockTicking, ToiletFlushing, Siren, Television,
  CarNoise, Talking, Rain, Thunderstorm, Fan,
};
inline constexpr std::size_t kAmbientCount = 10;
const char* ambient_name(Ambient a);

struct CorpusSpec {
  std::size_t n_snore = 500;
  std::size_t n_non_snore = 500;
  double snore_noisy_fraction = 0.274;
  std::size_t n_categories = kAmbientCount;
  std::uint64_t seed = 0;

  std::size_t noisy_snore_count() const;
};

// Throws ContractViolation when fractions or category counts do not add up.
void validate(const CorpusSpec& spec);

// Removes every run of >= min_run_ms made of 10 ms frames whose RMS is below
// threshold_dbfs. The result is an order-preserving subsequence of the input.
std::vector<double> trim_silence(std::span<const double> samples, double threshold_dbfs = -50.0,
                                 double min_run_ms = 100.0);

// Non-overlapping one-second samples; a trailing remainder is dropped.
std::vector<LabelledSample> cut_samples(std::span<const double> samples, int label,
                                        const std::string& source_id = {});

struct Split {
  std::vector<LabelledSample> train;
  std::vector<LabelledSample> test;
};

// Stratified, seeded split with |train| = round(ratio * N). Per-class train
// counts use largest-remainder allocation so each class stays within one
// sample of its exact proportion. Throws SplitTooSmall when N < 5.
Split split_dataset(std::vector<LabelledSample> samples, double ratio = 0.8,
                    std::uint64_t seed = 0);

// Index-level variant used by split_dataset: returns (train, test) indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::span<const int> labels, double ratio, std::uint64_t seed);

// Desk-scale stand-in corpus: n_snore amplitude-modulated 60-300 Hz noise
// bursts (the first noisy_snore_count() mixed with an ambient class at -10 dB)
// and n_non_snore ambient samples spread evenly over the categories.
std::vector<LabelledSample> generate_synthetic_corpus(const CorpusSpec& spec);

// Single generators, exposed for fixtures.
std::vector<double> synth_snore(std::uint64_t seed, std::size_t n_samples = dsp::kChunkSamples);
std::vector<double> synth_ambient(Ambient kind, std::uint64_t seed,
                                  std::size_t n_samples = dsp::kChunkSamples);

// Fraction of spectral energy between lo_hz and hi_hz (512-point frames).
double band_energy_fraction(std::span<const double> samples, double lo_hz, double hi_hz);

// 16-bit PCM mono 16 kHz only; samples scaled by 1/32768. Any other format
// throws UnsupportedFormat naming the offending field.
std::vector<double> load_wav(const std::filesystem::path& path);
std::vector<double> parse_wav(std::span<const std::uint8_t> bytes);

// Writes 16-bit PCM mono 16 kHz; samples are clipped to [-1, 1).
void write_wav(const std::filesystem::path& path, std::span<const double> samples);

// Reads <root>/snore/*.wav and <root>/non_snore/*.wav, trimming silence and
// cutting one-second samples. Files are visited in sorted order.
std::vector<LabelledSample> load_directory(const std::filesystem::path& root,
                                           double threshold_dbfs = -50.0);

// Writes samples back into the same layout (explicit export only).
void export_directory(const std::filesystem::path& root,
                      std::span<const LabelledSample> samples);

}  // namespace nudge::corpus
