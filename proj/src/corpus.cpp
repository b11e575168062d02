#include "nudge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>

#include "nudge/errors.hpp"
#include "nudge/rng.hpp"

namespace nudge::corpus {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kFs = static_cast<double>(dsp::kSampleRate);
constexpr std::size_t kFrame10ms = 160;

// RBJ cookbook biquad, direct form I.
class Biquad {
 public:
  static Biquad lowpass(double hz, double q = std::numbers::sqrt2 / 2.0) {
    const double w = kTwoPi * hz / kFs, a = std::sin(w) / (2.0 * q), c = std::cos(w);
    return Biquad((1 - c) / 2, 1 - c, (1 - c) / 2, 1 + a, -2 * c, 1 - a);
  }
  static Biquad highpass(double hz, double q = std::numbers::sqrt2 / 2.0) {
    const double w = kTwoPi * hz / kFs, a = std::sin(w) / (2.0 * q), c = std::cos(w);
    return Biquad((1 + c) / 2, -(1 + c), (1 + c) / 2, 1 + a, -2 * c, 1 - a);
  }

  double operator()(double x) {
    const double y = b0_ * x + b1_ * x1_ + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

  void run(std::vector<double>& v) {
    for (double& x : v) x = (*this)(x);
  }

 private:
  Biquad(double b0, double b1, double b2, double a0, double a1, double a2)
      : b0_(b0 / a0), b1_(b1 / a0), b2_(b2 / a0), a1_(a1 / a0), a2_(a2 / a0) {}
  double b0_, b1_, b2_, a1_, a2_;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

std::vector<double> white(SplitMix64& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Band-limited noise via cascaded 2nd-order sections (4th-order edges).
std::vector<double> band_noise(SplitMix64& rng, std::size_t n, double lo, double hi) {
  // Filter a longer buffer and keep the tail so start-up transients are gone.
  const std::size_t warm = 2048;
  std::vector<double> v = white(rng, n + warm);
  if (lo > 0) {
    Biquad::highpass(lo).run(v);
    Biquad::highpass(lo).run(v);
  }
  if (hi < kFs / 2) {
    Biquad::lowpass(hi).run(v);
    Biquad::lowpass(hi).run(v);
  }
  return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(warm), v.end());
}

double rms(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / static_cast<double>(v.size()));
}

void scale_to_dbfs(std::vector<double>& v, double dbfs) {
  const double r = rms(v);
  if (r <= 0.0) return;
  const double g = std::pow(10.0, dbfs / 20.0) / r;
  for (double& x : v) x *= g;
}

void clip(std::vector<double>& v) {
  for (double& x : v) x = std::clamp(x, -1.0, 1.0);
}

double t_of(std::size_t i) { return static_cast<double>(i) / kFs; }

std::vector<double> harmonic_tone(std::size_t n, double f0, int harmonics, double vibrato_hz,
                                  double vibrato_depth, SplitMix64& rng) {
  std::vector<double> v(n, 0.0);
  double phase = rng.uniform(0.0, kTwoPi);
  for (std::size_t i = 0; i < n; ++i) {
    const double f = f0 * (1.0 + vibrato_depth * std::sin(kTwoPi * vibrato_hz * t_of(i)));
    phase += kTwoPi * f / kFs;
    double s = 0.0;
    for (int h = 1; h <= harmonics; ++h) s += std::sin(phase * h) / h;
    v[i] = s;
  }
  return v;
}

// Syllable-like on/off envelope at rate_hz.
std::vector<double> syllabic(std::size_t n, double rate_hz, SplitMix64& rng) {
  std::vector<double> env(n);
  const double phi = rng.uniform(0.0, kTwoPi);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::sin(kTwoPi * rate_hz * t_of(i) + phi);
    env[i] = 0.15 + 0.85 * std::max(0.0, s);
  }
  return env;
}

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xFF));
}

}  // namespace

const char* ambient_name(Ambient a) {
  switch (a) {
    case Ambient::BabyCrying: return "baby_crying";
    case Ambient::ClockTicking: return "clock_ticking";
    case Ambient::ToiletFlushing: return "toilet_flushing";
    case Ambient::Siren: return "siren";
    case Ambient::Television: return "television";
    case Ambient::CarNoise: return "car_noise";
    case Ambient::Talking: return "talking";
    case Ambient::Rain: return "rain";
    case Ambient::Thunderstorm: return "thunderstorm";
    case Ambient::Fan: return "fan";
  }
  return "unknown";
}

std::size_t CorpusSpec::noisy_snore_count() const {
  return static_cast<std::size_t>(std::llround(snore_noisy_fraction * static_cast<double>(n_snore)));
}

void validate(const CorpusSpec& spec) {
  if (!(spec.snore_noisy_fraction >= 0.0 && spec.snore_noisy_fraction <= 1.0)) {
    throw ContractViolation("snore_noisy_fraction must lie in [0, 1]");
  }
  if (spec.n_categories == 0 || spec.n_categories > kAmbientCount) {
    throw ContractViolation("n_categories must be in 1..10");
  }
  if (spec.n_non_snore % spec.n_categories != 0) {
    throw ContractViolation("n_non_snore must split evenly over the ambient categories");
  }
}

std::vector<double> trim_silence(std::span<const double> samples, double threshold_dbfs,
                                 double min_run_ms) {
  const std::size_t n = samples.size();
  const auto min_run = static_cast<std::size_t>(std::llround(min_run_ms * kFs / 1000.0));

  // Mark silent frames; a trailing short frame is judged on its own samples.
  std::vector<bool> silent_frame((n + kFrame10ms - 1) / kFrame10ms);
  for (std::size_t f = 0; f < silent_frame.size(); ++f) {
    const std::size_t lo = f * kFrame10ms;
    const std::size_t hi = std::min(lo + kFrame10ms, n);
    silent_frame[f] = dsp::compute_loudness(samples.subspan(lo, hi - lo)) < threshold_dbfs;
  }

  std::vector<double> out;
  out.reserve(n);
  std::size_t f = 0;
  while (f < silent_frame.size()) {
    const std::size_t lo = f * kFrame10ms;
    if (!silent_frame[f]) {
      const std::size_t hi = std::min(lo + kFrame10ms, n);
      out.insert(out.end(), samples.begin() + static_cast<std::ptrdiff_t>(lo),
                 samples.begin() + static_cast<std::ptrdiff_t>(hi));
      ++f;
      continue;
    }
    std::size_t g = f;
    while (g < silent_frame.size() && silent_frame[g]) ++g;
    const std::size_t hi = std::min(g * kFrame10ms, n);
    if (hi - lo < min_run) {
      out.insert(out.end(), samples.begin() + static_cast<std::ptrdiff_t>(lo),
                 samples.begin() + static_cast<std::ptrdiff_t>(hi));
    }
    f = g;
  }
  return out;
}

std::vector<LabelledSample> cut_samples(std::span<const double> samples, int label,
                                        const std::string& source_id) {
  if (label != 0 && label != 1) throw ContractViolation("label must be 0 or 1");
  std::vector<LabelledSample> out;
  for (auto& chunk : dsp::chunk_audio(samples)) {
    const auto seq = chunk.seq_no;
    out.push_back({std::move(chunk), label, source_id + "#" + std::to_string(seq)});
  }
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::span<const int> labels, double ratio, std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (n < 5) throw SplitTooSmall("need at least 5 samples to split, got " + std::to_string(n));
  if (!(ratio > 0.0 && ratio < 1.0)) throw ContractViolation("split ratio must lie in (0, 1)");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

  const auto total_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));

  struct Alloc {
    int label;
    std::size_t take;
    double frac;
  };
  std::vector<Alloc> alloc;
  std::size_t assigned = 0;
  for (const auto& [label, idx] : by_class) {
    const double exact = ratio * static_cast<double>(idx.size());
    const auto fl = static_cast<std::size_t>(std::floor(exact));
    alloc.push_back({label, fl, exact - static_cast<double>(fl)});
    assigned += fl;
  }
  std::vector<std::size_t> order(alloc.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return alloc[a].frac > alloc[b].frac; });
  for (std::size_t k = 0; assigned < total_train && k < order.size(); ++k, ++assigned) {
    ++alloc[order[k]].take;
  }

  SplitMix64 rng(seed);
  std::vector<std::size_t> train, test;
  std::size_t a = 0;
  for (auto& [label, idx] : by_class) {
    fisher_yates(std::span<std::size_t>(idx), rng);
    const std::size_t take = alloc[a++].take;
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
  }
  fisher_yates(std::span<std::size_t>(train), rng);
  fisher_yates(std::span<std::size_t>(test), rng);
  return {std::move(train), std::move(test)};
}

Split split_dataset(std::vector<LabelledSample> samples, double ratio, std::uint64_t seed) {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  auto [train_idx, test_idx] = split_indices(labels, ratio, seed);
  Split split;
  split.train.reserve(train_idx.size());
  split.test.reserve(test_idx.size());
  for (std::size_t i : train_idx) split.train.push_back(std::move(samples[i]));
  for (std::size_t i : test_idx) split.test.push_back(std::move(samples[i]));
  return split;
}

std::vector<double> synth_snore(std::uint64_t seed, std::size_t n) {
  SplitMix64 rng(seed);
  std::vector<double> v = band_noise(rng, n, 60.0, 300.0);
  const double fm = rng.uniform(0.5, 1.5);
  const double phi = rng.uniform(0.0, kTwoPi);
  const double shape = rng.uniform(1.0, 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::max(0.0, std::sin(kTwoPi * fm * t_of(i) + phi));
    v[i] *= 0.05 + std::pow(s, shape);
  }
  scale_to_dbfs(v, rng.uniform(-38.0, -12.0));
  clip(v);
  return v;
}

std::vector<double> synth_ambient(Ambient kind, std::uint64_t seed, std::size_t n) {
  SplitMix64 rng(seed);
  std::vector<double> v(n, 0.0);
  switch (kind) {
    case Ambient::BabyCrying: {
      v = harmonic_tone(n, rng.uniform(350.0, 550.0), 6, rng.uniform(4.0, 7.0), 0.03, rng);
      const auto env = syllabic(n, rng.uniform(1.2, 2.5), rng);
      for (std::size_t i = 0; i < n; ++i) v[i] *= env[i];
      break;
    }
    case Ambient::ClockTicking: {
      const double rate = rng.uniform(1.0, 4.0);
      const double offset = rng.uniform(0.0, 1.0 / rate);
      const std::vector<double> noise = band_noise(rng, n, 1500.0, 7000.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double since = std::fmod(t_of(i) - offset + 10.0, 1.0 / rate);
        v[i] = noise[i] * std::exp(-since / 0.004);
      }
      break;
    }
    case Ambient::ToiletFlushing: {
      v = band_noise(rng, n, 300.0, 4000.0);
      const double peak = rng.uniform(0.3, 0.7);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = (t_of(i) - peak) / 0.35;
        v[i] *= 0.3 + std::exp(-d * d);
      }
      break;
    }
    case Ambient::Siren: {
      const double lo = rng.uniform(550.0, 750.0), hi = rng.uniform(1100.0, 1500.0);
      const double rate = rng.uniform(0.5, 2.0);
      double phase = rng.uniform(0.0, kTwoPi);
      for (std::size_t i = 0; i < n; ++i) {
        const double f = lo + (hi - lo) * 0.5 * (1.0 + std::sin(kTwoPi * rate * t_of(i)));
        phase += kTwoPi * f / kFs;
        v[i] = std::sin(phase) + 0.3 * std::sin(2.0 * phase);
      }
      break;
    }
    case Ambient::Television: {
      v = band_noise(rng, n, 300.0, 3400.0);
      const auto env = syllabic(n, rng.uniform(3.0, 6.0), rng);
      const auto music = harmonic_tone(n, rng.uniform(250.0, 450.0), 4, 0.5, 0.01, rng);
      for (std::size_t i = 0; i < n; ++i) v[i] = v[i] * env[i] + 0.3 * music[i];
      break;
    }
    case Ambient::CarNoise: {
      v = band_noise(rng, n, 150.0, 1200.0);
      const auto hiss = band_noise(rng, n, 1200.0, 5000.0);
      for (std::size_t i = 0; i < n; ++i) v[i] += 0.4 * hiss[i];
      break;
    }
    case Ambient::Talking: {
      const auto voice = harmonic_tone(n, rng.uniform(110.0, 230.0), 12, 3.0, 0.05, rng);
      std::vector<double> formant = voice;
      Biquad::highpass(400.0).run(formant);
      Biquad::highpass(400.0).run(formant);
      const auto fric = band_noise(rng, n, 2500.0, 6000.0);
      const auto env = syllabic(n, rng.uniform(3.5, 6.0), rng);
      for (std::size_t i = 0; i < n; ++i) v[i] = (formant[i] + 0.2 * fric[i]) * env[i];
      break;
    }
    case Ambient::Rain: {
      v = band_noise(rng, n, 800.0, 7500.0);
      const std::size_t drops = 20 + rng.below(40);
      for (std::size_t d = 0; d < drops; ++d) {
        const std::size_t at = rng.below(n);
        const double amp = rng.uniform(2.0, 6.0);
        for (std::size_t k = 0; k < 80 && at + k < n; ++k) {
          v[at + k] += amp * std::exp(-static_cast<double>(k) / 12.0) * (k % 2 ? -1.0 : 1.0);
        }
      }
      break;
    }
    case Ambient::Thunderstorm: {
      v = band_noise(rng, n, 800.0, 7500.0);
      const auto rumble = band_noise(rng, n, 30.0, 250.0);
      const double centre = rng.uniform(0.2, 0.8);
      const double gain = rng.uniform(0.5, 1.2);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = (t_of(i) - centre) / 0.15;
        v[i] += gain * rumble[i] * std::exp(-d * d);
      }
      break;
    }
    case Ambient::Fan: {
      v = band_noise(rng, n, 400.0, 3000.0);
      const double hum = rng.uniform(100.0, 140.0);
      const double phi = rng.uniform(0.0, kTwoPi);
      for (std::size_t i = 0; i < n; ++i) v[i] += 0.2 * std::sin(kTwoPi * hum * t_of(i) + phi);
      break;
    }
  }
  scale_to_dbfs(v, rng.uniform(-40.0, -12.0));
  clip(v);
  return v;
}

std::vector<LabelledSample> generate_synthetic_corpus(const CorpusSpec& spec) {
  validate(spec);
  std::vector<LabelledSample> out;
  out.reserve(spec.n_snore + spec.n_non_snore);
  const std::size_t noisy = spec.noisy_snore_count();

  for (std::size_t i = 0; i < spec.n_snore; ++i) {
    std::vector<double> s = synth_snore(derive_seed(spec.seed, 2 * i));
    std::string id = "synthetic/snore/" + std::to_string(i);
    if (i < noisy) {
      const auto kind = static_cast<Ambient>(i % spec.n_categories);
      std::vector<double> bg = synth_ambient(kind, derive_seed(spec.seed, 2 * i + 1));
      const double target = rms(s) * std::pow(10.0, -10.0 / 20.0);
      const double r = rms(bg);
      const double g = r > 0.0 ? target / r : 0.0;
      for (std::size_t k = 0; k < s.size(); ++k) s[k] += g * bg[k];
      clip(s);
      id += "+" + std::string(ambient_name(kind));
    }
    out.push_back({dsp::AudioChunk{std::move(s), 0}, 1, std::move(id)});
  }

  const std::size_t per_class = spec.n_non_snore / spec.n_categories;
  for (std::size_t c = 0; c < spec.n_categories; ++c) {
    const auto kind = static_cast<Ambient>(c);
    for (std::size_t k = 0; k < per_class; ++k) {
      const std::size_t idx = c * per_class + k;
      auto s = synth_ambient(kind, derive_seed(spec.seed ^ 0xA5A5A5A5ULL, idx));
      out.push_back({dsp::AudioChunk{std::move(s), 0}, 0,
                     "synthetic/" + std::string(ambient_name(kind)) + "/" + std::to_string(k)});
    }
  }
  return out;
}

double band_energy_fraction(std::span<const double> samples, double lo_hz, double hi_hz) {
  constexpr std::size_t kN = 512;
  std::vector<std::complex<double>> buf(kN);
  double band = 0.0, total = 0.0;
  for (std::size_t start = 0; start + kN <= samples.size(); start += kN) {
    for (std::size_t i = 0; i < kN; ++i) {
      const double w = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / (kN - 1));
      buf[i] = samples[start + i] * w;
    }
    dsp::fft_inplace(buf);
    for (std::size_t k = 0; k <= kN / 2; ++k) {
      const double p = std::norm(buf[k]);
      const double hz = static_cast<double>(k) * kFs / kN;
      total += p;
      if (hz >= lo_hz && hz <= hi_hz) band += p;
    }
  }
  return total > 0.0 ? band / total : 0.0;
}

std::vector<double> parse_wav(std::span<const std::uint8_t> b) {
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0) {
    throw UnsupportedFormat("riff", "not a RIFF file");
  }
  if (std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw UnsupportedFormat("wave", "RIFF file is not WAVE");
  }

  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint32_t size = read_u32(b, pos + 4);
    const std::size_t body = pos + 8;
    const bool is_fmt = std::memcmp(b.data() + pos, "fmt ", 4) == 0;
    const bool is_data = std::memcmp(b.data() + pos, "data", 4) == 0;

    if (is_fmt) {
      if (size < 16 || body + 16 > b.size()) throw UnsupportedFormat("fmt", "truncated fmt chunk");
      const std::uint16_t format = read_u16(b, body);
      const std::uint16_t channels = read_u16(b, body + 2);
      const std::uint32_t rate = read_u32(b, body + 4);
      const std::uint16_t bits = read_u16(b, body + 14);
      if (format != 1) {
        throw UnsupportedFormat("audio_format", "audio_format " + std::to_string(format) +
                                                    " is not uncompressed PCM (1)");
      }
      if (channels != 1) {
        throw UnsupportedFormat("channels", "channels " + std::to_string(channels) +
                                                " unsupported, need mono");
      }
      if (rate != static_cast<std::uint32_t>(dsp::kSampleRate)) {
        throw UnsupportedFormat("sample_rate", "sample_rate " + std::to_string(rate) +
                                                   " unsupported, need 16000 (no resampling)");
      }
      if (bits != 16) {
        throw UnsupportedFormat("bits_per_sample", "bits_per_sample " + std::to_string(bits) +
                                                       " unsupported, need 16");
      }
      have_fmt = true;
    } else if (is_data) {
      if (!have_fmt) throw UnsupportedFormat("fmt", "data chunk precedes fmt chunk");
      // Writers that stream sometimes leave the size unset; take what is present.
      const std::size_t avail = std::min<std::size_t>(size, b.size() - body) & ~std::size_t{1};
      std::vector<double> out(avail / 2);
      for (std::size_t i = 0; i < out.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(b, body + 2 * i));
        out[i] = static_cast<double>(raw) / 32768.0;
      }
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw UnsupportedFormat(have_fmt ? "data" : "fmt",
                          have_fmt ? "WAVE file has no data chunk" : "WAVE file has no fmt chunk");
}

std::vector<double> load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open WAV file: " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return parse_wav(bytes);
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples) {
  std::vector<std::uint8_t> out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, dsp::kSampleRate);
  put_u32(out, dsp::kSampleRate * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (double s : samples) {
    const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open WAV file for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("failed writing WAV file: " + path.string());
}

std::vector<LabelledSample> load_directory(const std::filesystem::path& root,
                                           double threshold_dbfs) {
  namespace fs = std::filesystem;
  std::vector<LabelledSample> out;
  const std::pair<const char*, int> classes[] = {{"snore", 1}, {"non_snore", 0}};
  bool found = false;
  for (const auto& [dir, label] : classes) {
    const fs::path sub = root / dir;
    if (!fs::is_directory(sub)) continue;
    found = true;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(sub)) {
      if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      const auto trimmed = trim_silence(load_wav(file), threshold_dbfs);
      auto cut = cut_samples(trimmed, label, std::string(dir) + "/" + file.filename().string());
      std::move(cut.begin(), cut.end(), std::back_inserter(out));
    }
  }
  if (!found) {
    throw Error("dataset directory " + root.string() + " has neither snore/ nor non_snore/");
  }
  return out;
}

void export_directory(const std::filesystem::path& root, std::span<const LabelledSample> samples) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "snore");
  fs::create_directories(root / "non_snore");
  std::size_t i = 0;
  for (const auto& s : samples) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.wav", i++);
    write_wav(root / (s.label == 1 ? "snore" : "non_snore") / name, s.chunk.samples);
  }
}

}  // namespace nudge::corpus
