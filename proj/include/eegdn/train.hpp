#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eegdn/dataset.hpp"
#include "eegdn/error.hpp"
#include "eegdn/model.hpp"

namespace eegdn {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 20;
  std::size_t patience = 10;
  std::uint64_t seed = 7;
  double validation_fraction = 0.1;

  void validate() const {
    if (!(learning_rate > 0)) throw InputError("learning_rate must be > 0");
    if (!(validation_fraction > 0 && validation_fraction < 1)) throw InputError("validation_fraction must be in (0, 1)");
    if (batch_size < 1) throw InputError("batch_size must be >= 1");
    if (max_epochs < 1) throw InputError("max_epochs must be >= 1");
  }
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> seconds;
  std::size_t best_epoch = 0;  // 0-based
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::size_t n_skipped_degenerate = 0;

  std::size_t epochs() const noexcept { return val_loss.size(); }
};

inline std::string history_csv(const TrainHistory& h) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,seconds\n" << std::setprecision(17);
  for (std::size_t e = 0; e < h.epochs(); ++e) {
    os << (e + 1) << ',' << h.train_loss[e] << ',' << h.val_loss[e] << ',' << h.seconds[e] << '\n';
  }
  return os.str();
}

inline void save_history_csv(const TrainHistory& h, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path);
  f << history_csv(h);
}

// ---------------------------------------------------------------------------
// loss

template <class T>
double mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: shapes " + shape_str(pred.shape()) + " and " + shape_str(target.shape()) + " differ",
                     "all");
  }
  long double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const long double d = static_cast<long double>(pred[i]) - static_cast<long double>(target[i]);
    acc += d * d;
  }
  return static_cast<double>(acc / static_cast<long double>(pred.size()));
}

/// d mse / d pred, scaled by `scale` (1 / batch size for a batch mean).
template <class T>
Tensor<T> mse_grad(const Tensor<T>& pred, const Tensor<T>& target, double scale = 1.0) {
  Tensor<T> g(pred.shape());
  const T k = static_cast<T>(2.0 * scale / static_cast<double>(pred.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = k * (pred[i] - target[i]);
  return g;
}

// ---------------------------------------------------------------------------
// Adam

template <class T>
struct AdamState {
  ParamStore<T> m;
  ParamStore<T> v;
  std::uint64_t timestep = 0;

  static AdamState zeros_like(const ParamStore<T>& p) { return {p.zeros_like(), p.zeros_like(), 0}; }
};

/// One bias-corrected Adam update in place; increments the timestep.
template <class T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, AdamState<T>& state, const TrainConfig& cfg) {
  if (params.size() != grads.size() || state.m.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state stores are not aligned", "layer count");
  }
  ++state.timestep;
  const double t = static_cast<double>(state.timestep);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
  const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
  const T lr = static_cast<T>(cfg.learning_rate), eps = static_cast<T>(cfg.epsilon);
  auto update = [&](Tensor<T>& p, const Tensor<T>& g, Tensor<T>& m, Tensor<T>& v) {
    if (p.shape() != g.shape()) throw ShapeError("adam_step: gradient shape mismatch", "parameter");
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      const T mh = m[i] * c1;
      const T vh = v[i] * c2;
      p[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    update(params.entries[i].weights, grads.entries[i].weights, state.m.entries[i].weights, state.v.entries[i].weights);
    update(params.entries[i].bias, grads.entries[i].bias, state.m.entries[i].bias, state.v.entries[i].bias);
  }
}

// ---------------------------------------------------------------------------
// training loop

namespace detail {

template <class T>
Tensor<T> segment_tensor(const std::vector<float>& samples, const Shape& shape) {
  if (samples.size() != shape_numel(shape)) {
    throw InputError("segment has " + std::to_string(samples.size()) + " samples, model input " + shape_str(shape) +
                     " needs " + std::to_string(shape_numel(shape)));
  }
  return Tensor<T>(shape, std::vector<T>(samples.begin(), samples.end()));
}

inline void check_normalized(const SegmentPair& p, std::size_t index) {
  constexpr float tol = 1e-6f;
  for (float v : p.contaminated) {
    if (!(v >= -tol && v <= 1.0f + tol)) {
      throw InputError("segment " + std::to_string(index) + " (" + p.origin_id + "@" + std::to_string(p.start) +
                       ") is not min-max normalized: contaminated value " + std::to_string(v));
    }
  }
  for (float v : p.clean) {
    if (!std::isfinite(v)) throw InputError("segment " + std::to_string(index) + " has a non-finite clean value");
  }
}

template <class T>
double mean_loss(const Model<T>& model, const std::vector<const SegmentPair*>& set) {
  long double acc = 0;
  for (const auto* p : set) {
    const auto x = segment_tensor<T>(p->contaminated, model.input_shape());
    const auto y = segment_tensor<T>(p->clean, model.input_shape());
    acc += mse_loss(model.forward(x), y);
  }
  return static_cast<double>(acc / static_cast<long double>(set.size()));
}

}  // namespace detail

template <class T>
struct TrainResult {
  Model<T> model;
  TrainHistory history;
};

/// Minimizes mse(forward(contaminated), clean) with Adam over seeded minibatches.
/// Returns the parameters from the epoch with the lowest validation loss;
/// stops once `patience` epochs pass without improvement.
template <class T = float>
TrainResult<T> train(const ModelSpec& spec, const std::vector<SegmentPair>& dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) throw InputError("training dataset is empty");
  TrainHistory hist;
  std::vector<const SegmentPair*> usable;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    detail::check_normalized(dataset[i], i);
    if (dataset[i].degenerate) {
      ++hist.n_skipped_degenerate;
    } else {
      usable.push_back(&dataset[i]);
    }
  }
  if (usable.empty()) throw InputError("training dataset has no non-degenerate segments");

  Model<T> model(spec);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(usable.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<const SegmentPair*> train_set, val_set;
  if (usable.size() == 1) {
    train_set = val_set = usable;
  } else {
    auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(usable.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, usable.size() - 1);
    for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? val_set : train_set).push_back(usable[order[i]]);
  }
  hist.n_train = train_set.size();
  hist.n_val = val_set.size();

  AdamState<T> adam = AdamState<T>::zeros_like(model.params());
  ParamStore<T> best = model.params();
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::vector<std::size_t> idx(train_set.size());
  std::iota(idx.begin(), idx.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(idx.begin(), idx.end(), rng);
    long double train_acc = 0;
    for (std::size_t b0 = 0; b0 < idx.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(idx.size(), b0 + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(b1 - b0);
      ParamStore<T> grads = model.params().zeros_like();
      for (std::size_t k = b0; k < b1; ++k) {
        const auto* p = train_set[idx[k]];
        const auto x = detail::segment_tensor<T>(p->contaminated, model.input_shape());
        const auto y = detail::segment_tensor<T>(p->clean, model.input_shape());
        const auto tr = model.forward_trace(x);
        train_acc += mse_loss(tr.output(), y);
        model.backward_into(tr, mse_grad(tr.output(), y, scale), grads);
      }
      adam_step(model.params_mut(), grads, adam, cfg);
    }
    const double val = detail::mean_loss(model, val_set);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    hist.train_loss.push_back(static_cast<double>(train_acc / static_cast<long double>(idx.size())));
    hist.val_loss.push_back(val);
    hist.seconds.push_back(secs);
    if (val < best_val) {
      best_val = val;
      best = model.params();
      hist.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= cfg.patience) break;
  }
  model.params_mut() = std::move(best);
  return {std::move(model), std::move(hist)};
}

// ---------------------------------------------------------------------------
// finite-difference gradient verification

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t n_checked = 0;
  std::size_t n_skipped_nonsmooth = 0;
  std::size_t n_total_params = 0;
};

/// |a - n| / max(|a|, |n|); 0 when both are exactly 0.
inline double relative_error(double a, double n) {
  const double denom = std::max(std::abs(a), std::abs(n));
  return denom == 0.0 ? 0.0 : std::abs(a - n) / denom;
}

/// Compares the float64 backward() against central differences on `n_params`
/// randomly chosen parameters of a freshly initialized model, over one random
/// batch of inputs and targets in [0, 1]. The difference quotients are taken
/// on a long double copy of the model so that rounding in the two loss
/// evaluations stays well below the truncation error of the step.
///
/// Relative error per parameter is |a - n| / max(|a|, |n|), reported as 0 when
/// both are exactly 0. A probe whose +-h evaluations change any ReLU sign or
/// max-pool argmax sits on a kink where the derivative does not exist; it is
/// skipped and another parameter is drawn.
inline GradCheckReport grad_check(const ModelSpec& spec, std::size_t n_params, double h, std::uint64_t seed = 1,
                                  std::size_t batch = 2) {
  using LD = long double;
  Model<double> model(spec);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<Tensor<double>> xs, ys;
  for (std::size_t b = 0; b < batch; ++b) {
    Tensor<double> x(spec.input_shape), y(spec.input_shape);
    for (auto& v : x.data()) v = u01(rng);
    for (auto& v : y.data()) v = u01(rng);
    xs.push_back(std::move(x));
    ys.push_back(std::move(y));
  }

  const double scale = 1.0 / static_cast<double>(batch);
  ParamStore<double> analytic = model.params().zeros_like();
  for (std::size_t b = 0; b < batch; ++b) {
    const auto tr = model.forward_trace(xs[b]);
    model.backward_into(tr, mse_grad(tr.output(), ys[b], scale), analytic);
  }

  // The finite-difference side runs the same parameters in extended precision
  // so that forward roundoff stays well below the smallest gradients.
  Model<LD> oracle(spec, model.params().template cast<LD>());
  std::vector<Tensor<LD>> xl, yl;
  std::vector<std::vector<std::uint8_t>> base_patterns;
  for (std::size_t b = 0; b < batch; ++b) {
    xl.push_back(xs[b].template cast<LD>());
    yl.push_back(ys[b].template cast<LD>());
    base_patterns.push_back(oracle.activation_pattern(oracle.forward_trace(xl[b])));
  }

  // Batch loss; sets `smooth` false if the activation pattern moved.
  auto loss_at = [&](bool& smooth) {
    LD acc = 0;
    for (std::size_t b = 0; b < batch; ++b) {
      const auto tr = oracle.forward_trace(xl[b]);
      if (oracle.activation_pattern(tr) != base_patterns[b]) smooth = false;
      LD sq = 0;
      const auto& out = tr.output();
      for (std::size_t i = 0; i < out.size(); ++i) {
        const LD d = out[i] - yl[b][i];
        sq += d * d;
      }
      acc += sq / static_cast<LD>(out.size());
    }
    return acc / static_cast<LD>(batch);
  };

  GradCheckReport rep;
  rep.n_total_params = model.parameter_count();
  const std::size_t want = std::min(n_params, rep.n_total_params);
  std::uniform_int_distribution<std::size_t> pick(0, rep.n_total_params - 1);
  std::set<std::size_t> tried;
  while (rep.n_checked < want && tried.size() < rep.n_total_params) {
    const std::size_t k = pick(rng);
    if (!tried.insert(k).second) continue;
    LD& theta = oracle.params_mut().flat(k);
    const LD orig = theta;
    bool smooth = true;
    const LD tp = orig + static_cast<LD>(h);
    const LD tm = orig - static_cast<LD>(h);
    theta = tp;
    const LD lp = loss_at(smooth);
    theta = tm;
    const LD lm = loss_at(smooth);
    theta = orig;
    if (!smooth) {
      ++rep.n_skipped_nonsmooth;
      continue;
    }
    const double numeric = static_cast<double>((lp - lm) / (tp - tm));
    const double a = analytic.flat(k);
    const double abs_err = std::abs(a - numeric);
    const double rel = relative_error(a, numeric);
    rep.max_relative_error = std::max(rep.max_relative_error, rel);
    rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
    ++rep.n_checked;
  }
  return rep;
}

}  // namespace eegdn
