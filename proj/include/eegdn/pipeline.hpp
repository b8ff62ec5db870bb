#pragma once

// Single-channel preprocessing: rational resampling, detrending, band-pass
// filtering, edge trimming, windowing and per-window min-max normalization.
// All filters are linear-phase FIRs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "eegdn/dataset.hpp"
#include "eegdn/error.hpp"

namespace eegdn {

enum class RecordingKind { clean, contaminated };
enum class RecordingSource { synthetic, imported };

inline const char* to_string(RecordingKind k) { return k == RecordingKind::clean ? "clean" : "contaminated"; }
inline const char* to_string(RecordingSource s) { return s == RecordingSource::synthetic ? "synthetic" : "imported"; }

struct Recording {
  std::string id;
  double fs = kTargetFs;
  std::vector<float> samples;
  RecordingKind kind = RecordingKind::clean;
  RecordingSource source = RecordingSource::imported;

  void validate() const {
    if (samples.empty()) throw InputError("recording '" + id + "' has no samples");
    if (!(fs > 0.0) || !std::isfinite(fs)) throw InputError("recording '" + id + "' has invalid fs");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (!std::isfinite(samples[i])) {
        throw InputError("recording '" + id + "' has a non-finite sample at index " + std::to_string(i));
      }
    }
  }
  double duration_s() const { return static_cast<double>(samples.size()) / fs; }
};

// ---------------------------------------------------------------------------
// FIR design

/// Hamming-windowed sinc low-pass with `n_taps` (odd) taps and cutoff `fc`
/// in cycles per sample, scaled to unit DC gain. Computed for the first half
/// and mirrored so the response is exactly symmetric.
inline std::vector<double> design_lowpass(std::size_t n_taps, double fc) {
  if (n_taps % 2 == 0 || n_taps < 1) throw InputError("FIR length must be odd");
  if (!(fc > 0.0 && fc < 0.5)) throw InputError("FIR cutoff must lie in (0, 0.5) cycles/sample");
  const std::size_t mid = n_taps / 2;
  std::vector<double> h(n_taps);
  for (std::size_t i = 0; i <= mid; ++i) {
    const double t = static_cast<double>(i) - static_cast<double>(mid);
    const double sinc = t == 0.0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * t) / (std::numbers::pi * t);
    const double w = n_taps == 1 ? 1.0
                                 : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                          static_cast<double>(n_taps - 1));
    h[i] = sinc * w;
    h[n_taps - 1 - i] = h[i];
  }
  // pairwise-symmetric sum keeps the normalization itself symmetric
  double dc = h[mid];
  for (std::size_t i = 0; i < mid; ++i) dc += 2.0 * h[i];
  for (auto& v : h) v /= dc;
  return h;
}

/// Band-pass as the difference of two unit-gain low-passes; exactly zero DC gain.
inline std::vector<double> design_bandpass(std::size_t n_taps, double f_lo, double f_hi) {
  auto hi = design_lowpass(n_taps, f_hi);
  const auto lo = design_lowpass(n_taps, f_lo);
  for (std::size_t i = 0; i < n_taps; ++i) hi[i] -= lo[i];
  return hi;
}

/// Zero-padded "same" convolution with a symmetric odd-length FIR, delay removed.
template <class Seq>
std::vector<double> fir_same(const Seq& x, const std::vector<double>& h) {
  const std::size_t n = x.size(), k_len = h.size(), delay = k_len / 2;
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    // y[i] = sum_k h[k] x[i + delay - k]
    const std::size_t k_lo = i + delay >= n ? i + delay - (n - 1) : 0;
    const std::size_t k_hi = std::min(k_len - 1, i + delay);
    double acc = 0.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k) acc += h[k] * static_cast<double>(x[i + delay - k]);
    y[i] = acc;
  }
  return y;
}

inline std::vector<float> to_float(const std::vector<double>& v) {
  std::vector<float> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [](double d) { return static_cast<float>(d); });
  return out;
}

// ---------------------------------------------------------------------------
// resample

struct Ratio {
  std::size_t p = 1, q = 1;
};

/// target / fs as p / q in lowest terms with p, q <= 1000.
inline Ratio rational_ratio(double fs, double target_fs) {
  if (!(fs > 0.0) || !(target_fs > 0.0)) throw InputError("sampling rates must be positive");
  const double r = target_fs / fs;
  for (std::size_t q = 1; q <= 1000; ++q) {
    const double pf = r * static_cast<double>(q);
    const double pr = std::round(pf);
    if (pr >= 1.0 && pr <= 1000.0 && std::abs(pf - pr) <= 1e-9 * std::max(1.0, pf)) {
      return {static_cast<std::size_t>(pr), q};
    }
  }
  std::ostringstream os;
  os << "resample: ratio " << target_fs << "/" << fs << " is not a rational p/q with p, q <= 1000";
  throw InputError(os.str());
}

/// Polyphase rational resampling with a Hamming-windowed sinc anti-alias FIR
/// of 64*max(p,q)+1 taps, cutoff min(fs, target)/2 * 0.9, delay compensated.
inline Recording resample(const Recording& rec, double target_fs = kTargetFs) {
  rec.validate();
  const auto [p, q] = rational_ratio(rec.fs, target_fs);
  Recording out = rec;
  out.fs = target_fs;
  if (p == 1 && q == 1) return out;

  const std::size_t n_taps = 64 * std::max(p, q) + 1;
  const double cutoff_hz = std::min(rec.fs, target_fs) / 2.0 * 0.9;
  auto h = design_lowpass(n_taps, cutoff_hz / (rec.fs * static_cast<double>(p)));
  for (auto& v : h) v *= static_cast<double>(p);

  const std::size_t n = rec.samples.size();
  const std::size_t out_len = (n * p + q - 1) / q;
  const std::size_t delay = n_taps / 2;
  out.samples.assign(out_len, 0.0f);
  for (std::size_t m = 0; m < out_len; ++m) {
    // upsampled index t = m q + delay; taps k with (t - k) divisible by p hit real samples
    const std::size_t t = m * q + delay;
    double acc = 0.0;
    for (std::size_t k = t % p; k < n_taps && k <= t; k += p) {
      const std::size_t src = (t - k) / p;
      if (src < n) acc += h[k] * static_cast<double>(rec.samples[src]);
    }
    out.samples[m] = static_cast<float>(acc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// detrend / bandpass / trim

/// Subtracts the least-squares line a + b t.
inline Recording detrend(const Recording& rec) {
  if (rec.samples.size() < 2) throw InputError("detrend needs at least 2 samples");
  const std::size_t n = rec.samples.size();
  const double tc = (static_cast<double>(n) - 1.0) / 2.0;
  double mean = 0.0;
  for (float v : rec.samples) mean += v;
  mean /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) - tc;
    sxy += t * (static_cast<double>(rec.samples[i]) - mean);
    sxx += t * t;
  }
  const double slope = sxy / sxx;
  Recording out = rec;
  for (std::size_t i = 0; i < n; ++i) {
    out.samples[i] = static_cast<float>(static_cast<double>(rec.samples[i]) - mean -
                                        slope * (static_cast<double>(i) - tc));
  }
  return out;
}

inline constexpr std::size_t kBandpassTaps = 401;
inline constexpr double kBandLowHz = 1.0;
inline constexpr double kBandHighHz = 50.0;

inline const std::vector<double>& bandpass_taps() {
  static const std::vector<double> h =
      design_bandpass(kBandpassTaps, kBandLowHz / kTargetFs, kBandHighHz / kTargetFs);
  return h;
}

/// 1-50 Hz linear-phase band-pass at 200 Hz, shifted by its 200-sample delay.
inline Recording bandpass(const Recording& rec) {
  if (std::abs(rec.fs - kTargetFs) > 1e-9) {
    throw InputError("bandpass expects fs = 200 Hz, recording '" + rec.id + "' is at " + std::to_string(rec.fs));
  }
  Recording out = rec;
  out.samples = to_float(fir_same(rec.samples, bandpass_taps()));
  return out;
}

inline Recording trim_edges(const Recording& rec, double seconds = 3.0) {
  if (seconds < 0.0) throw InputError("trim seconds must be >= 0");
  const auto cut = static_cast<std::size_t>(std::llround(seconds * rec.fs));
  if (rec.samples.size() <= 2 * cut) {
    throw InputError("recording '" + rec.id + "' (" + std::to_string(rec.samples.size()) +
                     " samples) is too short to trim " + std::to_string(cut) + " samples from each end");
  }
  Recording out = rec;
  out.samples.assign(rec.samples.begin() + static_cast<std::ptrdiff_t>(cut),
                     rec.samples.end() - static_cast<std::ptrdiff_t>(cut));
  return out;
}

// ---------------------------------------------------------------------------
// segment / normalize

inline SegmentPair normalize(std::span<const float> contaminated, std::span<const float> clean) {
  if (contaminated.size() != kSegmentLength || clean.size() != kSegmentLength) {
    throw InputError("normalize expects two windows of " + std::to_string(kSegmentLength) + " samples");
  }
  SegmentPair p;
  const auto [lo, hi] = std::minmax_element(contaminated.begin(), contaminated.end());
  p.norm_min = *lo;
  p.norm_max = *hi;
  if (p.norm_max == p.norm_min) {
    p.degenerate = true;
    std::fill(p.contaminated.begin(), p.contaminated.end(), 0.5f);
    std::fill(p.clean.begin(), p.clean.end(), 0.5f);
    return p;
  }
  const double mn = p.norm_min, range = static_cast<double>(p.norm_max) - mn;
  for (std::size_t i = 0; i < kSegmentLength; ++i) {
    p.contaminated[i] = static_cast<float>((contaminated[i] - mn) / range);
    p.clean[i] = static_cast<float>((clean[i] - mn) / range);
  }
  return p;
}

inline std::vector<float> denormalize(std::span<const float> values, float norm_min, float norm_max) {
  std::vector<float> out(values.size());
  const double range = static_cast<double>(norm_max) - norm_min;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i] * range + norm_min);
  return out;
}

inline std::size_t segment_count(std::size_t n) {
  return n < kSegmentLength ? 0 : (n - kSegmentLength) / kSegmentHop + 1;
}

/// 800-sample windows with hop 400, each normalized by its contaminated window.
inline std::vector<SegmentPair> segment(const Recording& clean, const Recording& contaminated) {
  for (const auto* r : {&clean, &contaminated}) {
    if (std::abs(r->fs - kTargetFs) > 1e-9) throw InputError("segment expects 200 Hz, '" + r->id + "' is not");
  }
  if (clean.samples.size() != contaminated.samples.size()) {
    throw InputError("segment: length mismatch (clean " + std::to_string(clean.samples.size()) + ", contaminated " +
                     std::to_string(contaminated.samples.size()) + ")");
  }
  const std::size_t n = clean.samples.size();
  if (n < kSegmentLength) {
    throw InputError("segment: " + std::to_string(n) + " samples is shorter than one " +
                     std::to_string(kSegmentLength) + "-sample window");
  }
  std::vector<SegmentPair> out;
  out.reserve(segment_count(n));
  for (std::size_t s = 0; s + kSegmentLength <= n; s += kSegmentHop) {
    auto p = normalize(std::span<const float>(contaminated.samples).subspan(s, kSegmentLength),
                       std::span<const float>(clean.samples).subspan(s, kSegmentLength));
    p.origin_id = contaminated.id;
    p.start = static_cast<std::uint32_t>(s);
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// driver

struct PipelineOptions {
  double target_fs = kTargetFs;
  double trim_s = 3.0;
  bool filter_contaminated = false;  // only for artifact-free pairs, so both sides stay identical
};

/// resample -> detrend -> bandpass (clean only unless asked) -> trim -> segment/normalize.
inline std::vector<SegmentPair> run_pipeline(const Recording& clean, const Recording& contaminated,
                                             const PipelineOptions& opt = {}) {
  clean.validate();
  contaminated.validate();
  auto c = detrend(resample(clean, opt.target_fs));
  auto x = detrend(resample(contaminated, opt.target_fs));
  c = bandpass(c);
  if (opt.filter_contaminated) x = bandpass(x);
  c = trim_edges(c, opt.trim_s);
  x = trim_edges(x, opt.trim_s);
  return segment(c, x);
}

// ---------------------------------------------------------------------------
// CSV import

/// One sample per line; an optional first line "# fs=<Hz>" sets the rate.
/// `fs` is required when the header is absent and must agree with it otherwise.
inline Recording import_csv(const std::string& path, std::optional<double> fs = std::nullopt,
                            RecordingKind kind = RecordingKind::contaminated) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open " + path);
  Recording rec;
  rec.id = path;
  rec.kind = kind;
  rec.source = RecordingSource::imported;
  std::optional<double> header_fs;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r,");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(f, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const auto pos = t.find("fs=");
      if (line_no == 1 && pos != std::string::npos) {
        try {
          std::size_t used = 0;
          header_fs = std::stod(t.substr(pos + 3), &used);
        } catch (const std::exception&) {
          throw InputError(path + ":1: malformed fs header '" + t + "'");
        }
      }
      continue;
    }
    double v = 0.0;
    std::size_t used = 0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size() || !std::isfinite(v)) {
      throw InputError(path + ":" + std::to_string(line_no) + ": cannot parse '" + t + "' as a sample value");
    }
    rec.samples.push_back(static_cast<float>(v));
  }
  if (header_fs && fs && std::abs(*header_fs - *fs) > 1e-9) {
    throw InputError(path + ": header fs " + std::to_string(*header_fs) + " disagrees with requested fs " +
                     std::to_string(*fs));
  }
  if (!header_fs && !fs) throw InputError(path + ": no '# fs=' header and no sampling rate given");
  rec.fs = header_fs ? *header_fs : *fs;
  rec.validate();
  return rec;
}

}  // namespace eegdn
