#pragma once

// Reconstruction metrics (time and spectral RRMSE, correlation), Hann
// periodogram PSD and table-style aggregation.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "eegdn/dataset.hpp"
#include "eegdn/fft.hpp"
#include "eegdn/model.hpp"
#include "eegdn/pipeline.hpp"

namespace eegdn {

inline double rms(std::span<const double> x) {
  if (x.empty()) throw MetricError("rms of an empty sequence");
  long double acc = 0;
  for (double v : x) acc += static_cast<long double>(v) * v;
  return std::sqrt(static_cast<double>(acc / static_cast<long double>(x.size())));
}

inline std::vector<double> to_double(std::span<const float> x) { return {x.begin(), x.end()}; }

/// Periodic Hann window of length n.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

/// One-sided Hann periodogram of an 800-sample window: |X_k|^2 / (fs sum w^2),
/// interior bins doubled, 401 bins spaced fs/800 apart.
inline std::vector<double> psd(std::span<const double> x, double fs = kTargetFs) {
  if (x.size() != kSegmentLength) {
    throw MetricError("psd expects " + std::to_string(kSegmentLength) + " samples, got " + std::to_string(x.size()));
  }
  static const std::vector<double> w = hann_window(kSegmentLength);
  double sw2 = 0.0;
  for (double v : w) sw2 += v * v;
  std::vector<cplx> xw(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) xw[i] = cplx(x[i] * w[i], 0.0);
  const auto X = fft(xw);
  const std::size_t nb = x.size() / 2 + 1;
  std::vector<double> p(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    p[k] = std::norm(X[k]) / (fs * sw2);
    if (k != 0 && k != nb - 1) p[k] *= 2.0;
  }
  return p;
}

inline double rrmse_time(std::span<const double> y, std::span<const double> truth) {
  if (y.size() != truth.size()) throw MetricError("rrmse: length mismatch");
  const double denom = rms(truth);
  if (denom == 0.0) throw MetricError("rrmse: ground truth has zero power");
  std::vector<double> d(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) d[i] = y[i] - truth[i];
  return rms(d) / denom;
}

inline double rrmse_freq(std::span<const double> y, std::span<const double> truth, double fs = kTargetFs) {
  if (y.size() != truth.size()) throw MetricError("rrmse_freq: length mismatch");
  const auto py = psd(y, fs), pt = psd(truth, fs);
  return rrmse_time(py, pt);
}

/// Pearson correlation with population (divisor N) moments.
inline double cc(std::span<const double> y, std::span<const double> truth) {
  if (y.size() != truth.size() || y.empty()) throw MetricError("cc: length mismatch or empty input");
  const double n = static_cast<double>(y.size());
  long double my = 0, mt = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    my += y[i];
    mt += truth[i];
  }
  my /= n;
  mt /= n;
  long double syy = 0, stt = 0, syt = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const long double a = y[i] - my, b = truth[i] - mt;
    syy += a * a;
    stt += b * b;
    syt += a * b;
  }
  if (syy == 0 || stt == 0) throw MetricError("cc: zero-variance input");
  const double r = static_cast<double>(syt / std::sqrt(syy * stt));
  return std::clamp(r, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// aggregation

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population
};

inline Aggregate aggregate(const std::vector<double>& v) {
  Aggregate a;
  if (v.empty()) return a;
  long double m = 0;
  for (double x : v) m += x;
  m /= static_cast<long double>(v.size());
  long double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  a.mean = static_cast<double>(m);
  a.std = std::sqrt(static_cast<double>(s / static_cast<long double>(v.size())));
  return a;
}

/// "m ± s" with two decimals.
inline std::string format_pm(const Aggregate& a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", a.mean, a.std);
  return buf;
}

struct SegmentMetrics {
  std::string origin_id;
  std::uint32_t start = 0;
  double rrmse_time = 0.0;
  double rrmse_freq = 0.0;
  double cc = 0.0;
};

struct MetricsReport {
  std::string model;
  std::string task;
  bool denormalized = false;
  std::vector<SegmentMetrics> segments;
  std::size_t n_skipped_degenerate = 0;
  std::size_t n_skipped_metric_error = 0;

  std::size_t n_segments() const { return segments.size(); }
  std::vector<double> column(double SegmentMetrics::*f) const {
    std::vector<double> v;
    v.reserve(segments.size());
    for (const auto& s : segments) v.push_back(s.*f);
    return v;
  }
  Aggregate rrmse_time_agg() const { return aggregate(column(&SegmentMetrics::rrmse_time)); }
  Aggregate rrmse_freq_agg() const { return aggregate(column(&SegmentMetrics::rrmse_freq)); }
  Aggregate cc_agg() const { return aggregate(column(&SegmentMetrics::cc)); }

  std::string segments_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "origin_id,start,rrmse_time,rrmse_freq,cc\n";
    for (const auto& s : segments) {
      os << s.origin_id << ',' << s.start << ',' << s.rrmse_time << ',' << s.rrmse_freq << ',' << s.cc << '\n';
    }
    return os.str();
  }

  /// Table row: model,task,mode,n,RRMSE-Time,RRMSE-Freq,CC
  std::string summary_csv() const {
    std::ostringstream os;
    os << "model,task,mode,n_segments,rrmse_time,rrmse_freq,cc\n";
    os << model << ',' << task << ',' << (denormalized ? "denormalized" : "normalized") << ',' << n_segments() << ','
       << format_pm(rrmse_time_agg()) << ',' << format_pm(rrmse_freq_agg()) << ',' << format_pm(cc_agg()) << '\n';
    return os.str();
  }
};

namespace detail {

inline void add_segment(MetricsReport& rep, const SegmentPair& p, std::vector<double> y, std::vector<double> truth) {
  if (rep.denormalized) {
    const double mn = p.norm_min, range = static_cast<double>(p.norm_max) - mn;
    for (auto& v : y) v = v * range + mn;
    for (auto& v : truth) v = v * range + mn;
  }
  try {
    SegmentMetrics m;
    m.origin_id = p.origin_id;
    m.start = p.start;
    m.rrmse_time = rrmse_time(y, truth);
    m.rrmse_freq = rrmse_freq(y, truth);
    m.cc = cc(y, truth);
    rep.segments.push_back(std::move(m));
  } catch (const MetricError&) {
    ++rep.n_skipped_metric_error;
  }
}

}  // namespace detail

/// Runs `model` on each contaminated window and scores it against the clean one.
/// Degenerate pairs are skipped and counted.
template <class T>
MetricsReport evaluate(const Model<T>& model, const std::vector<SegmentPair>& data, bool denormalized = false,
                       std::string model_name = {}, std::string task = {}) {
  MetricsReport rep;
  rep.model = model_name.empty() ? model.spec().name : std::move(model_name);
  rep.task = std::move(task);
  rep.denormalized = denormalized;
  for (const auto& p : data) {
    if (p.degenerate) {
      ++rep.n_skipped_degenerate;
      continue;
    }
    Tensor<T> x(model.input_shape());
    for (std::size_t i = 0; i < kSegmentLength; ++i) x[i] = static_cast<T>(p.contaminated[i]);
    const auto out = model.forward(x);
    std::vector<double> y(kSegmentLength);
    for (std::size_t i = 0; i < kSegmentLength; ++i) y[i] = static_cast<double>(out[i]);
    detail::add_segment(rep, p, std::move(y), to_double(p.clean));
  }
  return rep;
}

/// Scores the contaminated input itself (the no-op baseline).
inline MetricsReport evaluate_baseline(const std::vector<SegmentPair>& data, bool denormalized = false,
                                       std::string task = {}) {
  MetricsReport rep;
  rep.model = "contaminated";
  rep.task = std::move(task);
  rep.denormalized = denormalized;
  for (const auto& p : data) {
    if (p.degenerate) {
      ++rep.n_skipped_degenerate;
      continue;
    }
    detail::add_segment(rep, p, to_double(p.contaminated), to_double(p.clean));
  }
  return rep;
}

}  // namespace eegdn
