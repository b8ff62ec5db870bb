#pragma once

// Synthetic clean EEG and artifact generators. These are stand-ins for real
// recordings: shapes follow the usual qualitative descriptions of each
// artifact class and every output is labeled synthetic.
//
//   clean  : 1/f (pink) noise band-limited to 1-50 Hz + one alpha-band sinusoid
//   eog    : Gaussian pulses (width 0.3-1.0 s, Poisson rate 0.25/s), low-passed < 5 Hz
//   emg    : white noise band-passed 20-95 Hz under cosine-tapered bursts of 0.2-0.8 s
//   motion : gated random-walk excursions, band-passed 0.5-30 Hz
//
// contaminated = clean + lambda * artifact, lambda chosen so that
// 20 log10(rms(clean) / rms(lambda * artifact)) = snr_db.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "eegdn/fft.hpp"
#include "eegdn/pipeline.hpp"

namespace eegdn {

enum class ArtifactKind { eog, emg, motion, none };

inline const char* to_string(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::eog: return "eog";
    case ArtifactKind::emg: return "emg";
    case ArtifactKind::motion: return "motion";
    case ArtifactKind::none: return "none";
  }
  return "?";
}

inline ArtifactKind artifact_kind_from(const std::string& s) {
  if (s == "eog") return ArtifactKind::eog;
  if (s == "emg") return ArtifactKind::emg;
  if (s == "motion") return ArtifactKind::motion;
  if (s == "none" || s == "clean") return ArtifactKind::none;
  throw InputError("unknown artifact kind '" + s + "' (expected eog, emg, motion or clean)");
}

struct SynthConfig {
  std::uint64_t seed = 7;
  double duration_s = 60.0;
  ArtifactKind kind = ArtifactKind::eog;
  double snr_db = 0.0;
  double native_fs = 256.0;

  void validate() const {
    if (!(duration_s >= 14.0)) throw InputError("synth: duration_s must be >= 14 (got " + std::to_string(duration_s) + ")");
    if (kind != ArtifactKind::none && !std::isfinite(snr_db)) throw InputError("synth: snr_db must be finite");
    if (!(native_fs > 0.0) || !std::isfinite(native_fs)) throw InputError("synth: native fs must be positive");
    if (native_fs < 2.0 * 100.0) throw InputError("synth: native fs must be >= 200 Hz to carry a 1-95 Hz band");
  }
};

struct SynthPair {
  Recording clean;
  Recording contaminated;
  double lambda = 0.0;
  std::vector<double> scaled_artifact;  // lambda * artifact, before float rounding
};

namespace detail {

inline double rms(const std::vector<double>& x) {
  long double acc = 0;
  for (double v : x) acc += static_cast<long double>(v) * v;
  return std::sqrt(static_cast<double>(acc / static_cast<long double>(x.size())));
}

inline void scale_to_unit_rms(std::vector<double>& x) {
  const double r = rms(x);
  if (r > 0.0) {
    for (auto& v : x) v /= r;
  }
}

/// Odd FIR length spanning roughly `cycles` periods of the lowest frequency of interest.
inline std::size_t fir_len(double fs, double f_low, double cycles, std::size_t cap) {
  auto n = static_cast<std::size_t>(std::ceil(cycles * fs / f_low));
  n = std::min(n, cap);
  return n | 1u;
}

inline std::vector<double> pink_noise(std::size_t n, double fs, std::mt19937_64& rng) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<cplx> spec(m, cplx(0.0, 0.0));
  for (std::size_t k = 1; k < m / 2; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(m);
    const double re = g(rng), im = g(rng);
    if (f < kBandLowHz || f > kBandHighHz) continue;
    const double a = 1.0 / std::sqrt(f);
    spec[k] = cplx(re * a, im * a);
    spec[m - k] = std::conj(spec[k]);
  }
  const auto t = ifft(spec);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = t[i].real();
  scale_to_unit_rms(out);
  return out;
}

/// Event onsets of a Poisson process with `rate` per second over [0, dur).
inline std::vector<double> poisson_onsets(double rate, double dur, std::mt19937_64& rng) {
  std::exponential_distribution<double> gap(rate);
  std::vector<double> t;
  for (double s = gap(rng); s < dur; s += gap(rng)) t.push_back(s);
  return t;
}

inline std::vector<double> eog_artifact(std::size_t n, double fs, std::mt19937_64& rng) {
  const double dur = static_cast<double>(n) / fs;
  auto onsets = poisson_onsets(0.25, dur, rng);
  if (onsets.empty()) onsets.push_back(dur / 2.0);
  std::uniform_real_distribution<double> width(0.3, 1.0), amp(0.5, 1.5);
  std::vector<double> x(n, 0.0);
  for (double t0 : onsets) {
    const double w = width(rng), a = amp(rng), sigma = w / 4.0;
    const auto lo = static_cast<std::ptrdiff_t>(std::floor((t0 - 4 * sigma) * fs));
    const auto hi = static_cast<std::ptrdiff_t>(std::ceil((t0 + 4 * sigma) * fs));
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(lo, 0); i <= hi && i < static_cast<std::ptrdiff_t>(n); ++i) {
      const double d = (static_cast<double>(i) / fs - t0) / sigma;
      x[static_cast<std::size_t>(i)] += a * std::exp(-0.5 * d * d);
    }
  }
  const auto h = design_lowpass(fir_len(fs, 5.0, 4.0, 4097), 5.0 / fs);
  return fir_same(x, h);
}

/// Raised-cosine burst envelope, each burst 0.2-0.8 s long.
inline std::vector<double> burst_envelope(std::size_t n, double fs, double rate, std::mt19937_64& rng) {
  const double dur = static_cast<double>(n) / fs;
  auto onsets = poisson_onsets(rate, dur, rng);
  if (onsets.empty()) onsets.push_back(dur / 2.0);
  std::uniform_real_distribution<double> len(0.2, 0.8);
  std::vector<double> env(n, 0.0);
  for (double t0 : onsets) {
    const double l = len(rng);
    const auto lo = static_cast<std::size_t>(t0 * fs);
    const auto cnt = static_cast<std::size_t>(l * fs);
    for (std::size_t j = 0; j < cnt && lo + j < n; ++j) {
      const double ph = static_cast<double>(j) / static_cast<double>(cnt);
      env[lo + j] = std::max(env[lo + j], 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * ph));
    }
  }
  return env;
}

inline std::vector<double> emg_artifact(std::size_t n, double fs, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> w(n);
  for (auto& v : w) v = g(rng);
  const double hi = std::min(95.0, 0.45 * fs);
  const auto h = design_bandpass(fir_len(fs, 20.0, 8.0, 4097), 20.0 / fs, hi / fs);
  auto x = fir_same(w, h);
  const auto env = burst_envelope(n, fs, 0.5, rng);
  for (std::size_t i = 0; i < n; ++i) x[i] *= env[i];
  return x;
}

inline std::vector<double> motion_artifact(std::size_t n, double fs, std::mt19937_64& rng) {
  const double dur = static_cast<double>(n) / fs;
  auto onsets = poisson_onsets(0.2, dur, rng);
  if (onsets.empty()) onsets.push_back(dur / 2.0);
  std::uniform_real_distribution<double> len(1.0, 3.0);
  std::vector<double> gate(n, 0.0);
  for (double t0 : onsets) {
    const auto lo = static_cast<std::size_t>(t0 * fs);
    const auto cnt = static_cast<std::size_t>(len(rng) * fs);
    for (std::size_t j = 0; j < cnt && lo + j < n; ++j) gate[lo + j] = 1.0;
  }
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> walk(n);
  double pos = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pos += gate[i] * g(rng);
    walk[i] = pos;
  }
  const auto h = design_bandpass(fir_len(fs, 0.5, 3.5, 8193), 0.5 / fs, 30.0 / fs);
  return fir_same(walk, h);
}

}  // namespace detail

/// Deterministic (clean, contaminated) pair at cfg.native_fs.
inline SynthPair synthesize(const SynthConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.native_fs));
  std::mt19937_64 rng(cfg.seed);

  auto clean = detail::pink_noise(n, cfg.native_fs, rng);
  std::uniform_real_distribution<double> f_alpha(8.0, 13.0), a_alpha(0.5, 1.5), phase(0.0, 2.0 * std::numbers::pi);
  const double fa = f_alpha(rng), aa = a_alpha(rng), ph = phase(rng);
  for (std::size_t i = 0; i < n; ++i) {
    clean[i] += aa * std::sin(2.0 * std::numbers::pi * fa * static_cast<double>(i) / cfg.native_fs + ph);
  }

  SynthPair out;
  const std::string base = std::string("synth-") + to_string(cfg.kind) + "-" + std::to_string(cfg.seed);
  out.clean.id = base + "-clean";
  out.clean.fs = cfg.native_fs;
  out.clean.kind = RecordingKind::clean;
  out.clean.source = RecordingSource::synthetic;
  out.clean.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.clean.samples[i] = static_cast<float>(clean[i]);

  out.contaminated = out.clean;
  out.contaminated.id = base;
  out.contaminated.kind = RecordingKind::contaminated;
  out.scaled_artifact.assign(n, 0.0);
  if (cfg.kind == ArtifactKind::none) return out;

  std::vector<double> art;
  switch (cfg.kind) {
    case ArtifactKind::eog: art = detail::eog_artifact(n, cfg.native_fs, rng); break;
    case ArtifactKind::emg: art = detail::emg_artifact(n, cfg.native_fs, rng); break;
    case ArtifactKind::motion: art = detail::motion_artifact(n, cfg.native_fs, rng); break;
    case ArtifactKind::none: break;
  }
  // the clean reference is the float-rounded signal actually stored
  std::vector<double> stored(n);
  for (std::size_t i = 0; i < n; ++i) stored[i] = out.clean.samples[i];
  const double ra = detail::rms(art);
  if (!(ra > 0.0)) throw InputError("synth: generated artifact has zero power");
  out.lambda = detail::rms(stored) / (ra * std::pow(10.0, cfg.snr_db / 20.0));
  for (std::size_t i = 0; i < n; ++i) {
    out.scaled_artifact[i] = out.lambda * art[i];
    out.contaminated.samples[i] = static_cast<float>(stored[i] + out.scaled_artifact[i]);
  }
  return out;
}

/// 20 log10(rms(clean) / rms(artifact)) of a generated pair.
inline double measured_snr_db(const SynthPair& p) {
  std::vector<double> c(p.clean.samples.begin(), p.clean.samples.end());
  return 20.0 * std::log10(detail::rms(c) / detail::rms(p.scaled_artifact));
}

/// Seed of the i-th recording in a corpus (splitmix64 of base seed and index).
inline std::uint64_t corpus_seed(std::uint64_t base, std::size_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Synthesizes `n_recordings` recordings and runs each through the pipeline;
/// pairs are concatenated in recording order.
inline std::vector<SegmentPair> synthesize_dataset(const SynthConfig& cfg, std::size_t n_recordings = 1,
                                                   const PipelineOptions& opt = {}) {
  if (n_recordings < 1) throw InputError("synth: need at least one recording");
  std::vector<SegmentPair> all;
  for (std::size_t i = 0; i < n_recordings; ++i) {
    SynthConfig c = cfg;
    if (n_recordings > 1) c.seed = corpus_seed(cfg.seed, i);
    const auto pair = synthesize(c);
    PipelineOptions o = opt;
    if (cfg.kind == ArtifactKind::none) o.filter_contaminated = true;
    auto pairs = run_pipeline(pair.clean, pair.contaminated, o);
    all.insert(all.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
  }
  return all;
}

}  // namespace eegdn
