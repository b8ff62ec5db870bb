#pragma once

// Forward-pass latency harness and charge-meter power arithmetic.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eegdn/error.hpp"
#include "eegdn/model.hpp"

namespace eegdn {

struct BenchReport {
  std::string model;
  std::string dimensionality;
  std::size_t n_warmup = 0;
  std::size_t n_iters = 0;
  std::vector<double> samples_ms;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double std_ms = 0.0;  // population
  double p95_ms = 0.0;  // nearest rank
  std::optional<double> power_mah_per_h;
};

/// Statistics over raw latency samples.
inline void fill_stats(BenchReport& r) {
  const auto& s = r.samples_ms;
  if (s.empty()) throw InputError("bench: no latency samples");
  const double n = static_cast<double>(s.size());
  double m = 0.0;
  for (double v : s) m += v;
  m /= n;
  double var = 0.0;
  for (double v : s) var += (v - m) * (v - m);
  auto sorted = s;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = sorted.size();
  r.mean_ms = m;
  r.std_ms = std::sqrt(var / n);
  r.median_ms = k % 2 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * n));
  r.p95_ms = sorted[std::max<std::size_t>(rank, 1) - 1];
}

namespace detail {
inline std::atomic<bool>& timer_active() {
  static std::atomic<bool> flag{false};
  return flag;
}
}  // namespace detail

/// Times forward() only, on a monotonic clock, after `n_warmup` untimed calls.
/// Only one timing run may be active in a process at a time.
template <class T>
BenchReport time_inference(const Model<T>& model, const Tensor<T>& input, std::size_t n_warmup = 20,
                           std::size_t n_iters = 200) {
  if (n_iters < 1) throw InputError("bench: n_iters must be >= 1");
  bool expected = false;
  if (!detail::timer_active().compare_exchange_strong(expected, true)) {
    throw InputError("bench: another timing run is already active");
  }
  struct Release {
    ~Release() { detail::timer_active() = false; }
  } release;

  BenchReport r;
  r.model = model.spec().name;
  r.dimensionality = model.spec().dimensionality == Dimensionality::one_d ? "1D" : "2D";
  r.n_warmup = n_warmup;
  r.n_iters = n_iters;
  volatile T sink = 0;
  for (std::size_t i = 0; i < n_warmup; ++i) sink = model.forward(input)[0];
  r.samples_ms.reserve(n_iters);
  for (std::size_t i = 0; i < n_iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto y = model.forward(input);
    const auto t1 = std::chrono::steady_clock::now();
    sink = y[0];
    r.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  (void)sink;
  fill_stats(r);
  return r;
}

// ---------------------------------------------------------------------------
// power

struct PowerSample {
  double t_hours = 0.0;
  double charge_mah = 0.0;
};

struct PowerLog {
  std::vector<PowerSample> samples;

  void validate() const {
    if (samples.size() < 2) throw InputError("power log needs at least two samples");
    for (std::size_t i = 1; i < samples.size(); ++i) {
      if (!(samples[i].t_hours > samples[i - 1].t_hours)) {
        throw InputError("power log timestamps must be strictly increasing (row " + std::to_string(i + 1) + ")");
      }
      if (samples[i].charge_mah < samples[i - 1].charge_mah) {
        throw InputError("power log charge must be non-decreasing (row " + std::to_string(i + 1) + ")");
      }
    }
  }

  /// Charge at time t by linear interpolation.
  double charge_at(double t) const {
    if (t < samples.front().t_hours || t > samples.back().t_hours) {
      throw InputError("timestamp " + std::to_string(t) + " h is outside the power log range");
    }
    auto it = std::lower_bound(samples.begin(), samples.end(), t,
                               [](const PowerSample& s, double v) { return s.t_hours < v; });
    if (it->t_hours == t) return it->charge_mah;
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double f = (t - a.t_hours) / (b.t_hours - a.t_hours);
    return a.charge_mah + f * (b.charge_mah - a.charge_mah);
  }

  double start() const { return samples.front().t_hours; }
  double end() const { return samples.back().t_hours; }
};

/// CSV rows "timestamp_hours,charge_mAh"; a non-numeric first line is a header.
inline PowerLog parse_power_log(std::istream& in, const std::string& name = "power log") {
  PowerLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    const auto comma = line.find(',');
    PowerSample s;
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      std::size_t u1 = 0, u2 = 0;
      const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
      s.t_hours = std::stod(a, &u1);
      s.charge_mah = std::stod(b, &u2);
      if (a.find_first_not_of(" \t", u1) != std::string::npos || b.find_first_not_of(" \t", u2) != std::string::npos) {
        throw std::invalid_argument("trailing text");
      }
    } catch (const std::exception&) {
      if (log.samples.empty() && line_no == 1) continue;  // header
      throw InputError(name + ":" + std::to_string(line_no) + ": expected 'timestamp_hours,charge_mAh'");
    }
    log.samples.push_back(s);
  }
  log.validate();
  return log;
}

inline PowerLog load_power_log(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open " + path);
  return parse_power_log(f, path);
}

/// Average current P = (Q_end - Q_start) / (end - start), in mAh/h.
inline double power_from_log(const PowerLog& log, double start_ts, double end_ts) {
  const double t = end_ts - start_ts;
  if (!(t > 0.0)) throw InputError("power window must have positive duration");
  return (log.charge_at(end_ts) - log.charge_at(start_ts)) / t;
}

inline double power_from_log(const PowerLog& log) { return power_from_log(log, log.start(), log.end()); }

// ---------------------------------------------------------------------------
// reports

inline std::string bench_csv(const std::vector<BenchReport>& rows) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "model,dimensionality,n_warmup,n_iters,mean_ms,median_ms,std_ms,p95_ms,power_mah_per_h\n";
  for (const auto& r : rows) {
    os << r.model << ',' << r.dimensionality << ',' << r.n_warmup << ',' << r.n_iters << ',' << r.mean_ms << ','
       << r.median_ms << ',' << r.std_ms << ',' << r.p95_ms << ',';
    if (r.power_mah_per_h) os << *r.power_mah_per_h;
    os << '\n';
  }
  return os.str();
}

}  // namespace eegdn
